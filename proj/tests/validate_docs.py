"""Runs dump_docs and validates every document against docs/schemas."""

import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema
from referencing import Registry, Resource


def load_schemas(root):
    schemas = {}
    for path in sorted(root.glob("*.schema.json")):
        schemas[path.name.removesuffix(".schema.json")] = json.loads(path.read_text())
    registry = Registry().with_resources(
        (s["$id"], Resource.from_contents(s)) for s in schemas.values()
    )
    return schemas, registry


def main():
    dump, schema_dir = pathlib.Path(sys.argv[1]), pathlib.Path(sys.argv[2])
    schemas, registry = load_schemas(schema_dir)
    for schema in schemas.values():
        jsonschema.Draft202012Validator.check_schema(schema)
    validators = {
        name: jsonschema.Draft202012Validator(s, registry=registry) for name, s in schemas.items()
    }

    failures = 0
    seen = {name: 0 for name in schemas if name != "common"}
    with tempfile.TemporaryDirectory() as out:
        subprocess.run([str(dump), out], check=True)
        docs = sorted(pathlib.Path(out).glob("*.json"))
        for path in docs:
            name = path.name.split("--")[0]
            doc = json.loads(path.read_text())
            errors = list(validators[name].iter_errors(doc))
            seen[name] += 1
            for e in errors[:3]:
                print(f"FAIL {path.name}: {'/'.join(map(str, e.absolute_path))}: {e.message}")
            failures += bool(errors)
        # Content the corpus is built to produce; an empty list would validate vacuously.
        def grab(prefix):
            return [json.loads(p.read_text()) for p in docs if p.name.startswith(prefix)]
        checks = {
            "graph has edges": any(d["edges"] for d in grab("graph--all")),
            "an alert was raised": any(d["alerts"] for d in grab("alerts--all")),
            "a copy-move region pair": any(
                d["forensics"] and d["forensics"]["region_pairs"] for d in grab("image-detail--")
            ),
            "an image with neighbors": any(d["neighbors"] for d in grab("image-detail--")),
            "upload matched": any(d["matches"] for d in grab("related-images--copy")),
            "ingest issues reported": any(d["issues"] for d in grab("ingest-report--")),
        }
        for what, ok in checks.items():
            if not ok:
                print(f"FAIL coverage: {what}")
                failures += 1

    # The schemas must also reject things.
    bad = [
        ("health", {"status": "ok"}),
        ("error", {"error": {"code": "NotFound", "message": "x"}}),
        ("graph", {"nodes": [{"hash": "xyz", "phash": None, "cluster_id": "c0", "verdict": 0}], "edges": []}),
        ("alerts", {"alerts": [], "extra": 1}),
    ]
    for name, doc in bad:
        if validators[name].is_valid(doc):
            print(f"FAIL {name} schema accepts an invalid document")
            failures += 1

    for name, n in seen.items():
        if n == 0:
            print(f"FAIL no document exercised schema {name}")
            failures += 1
    print(f"{sum(seen.values())} documents, {len(seen)} schemas, {failures} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
