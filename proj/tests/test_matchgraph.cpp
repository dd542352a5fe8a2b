#include <gtest/gtest.h>

#include "mews/codec.hpp"
#include "mews/matchgraph.hpp"
#include "mews/synth.hpp"

namespace mews {
namespace {

FeatureRecord features_of(const RasterImage& img, const std::string& label) {
  const Bytes png = encode_png(img);
  FeatureRecord rec = extract_features(img, png, sha256(as_bytes(label)), AnnotatorRegistry{});
  return rec;
}

FeatureRecord features_of(const Bytes& bytes) { return extract_features(bytes, sha256(bytes), AnnotatorRegistry{}); }

TEST(Index, SelfIsTopCandidate) {
  DescriptorIndex index;
  std::vector<FeatureRecord> recs;
  for (int i = 0; i < 5; ++i) recs.push_back(features_of(synth::scene(100 + i), "s" + std::to_string(i)));
  for (const auto& r : recs) index.insert(r.content_hash, r.descriptors, r.phash);
  for (const auto& r : recs) {
    const auto c = index.candidates(r.descriptors, r.phash);
    ASSERT_FALSE(c.empty());
    EXPECT_EQ(c.front().hash, r.content_hash);
    EXPECT_EQ(c.front().phash_distance, 0);
    EXPECT_EQ(index.bucket_entries(r.content_hash), r.descriptors.size() * DescriptorIndex::kTables);
  }
  EXPECT_THROW(index.insert(recs[0].content_hash, recs[0].descriptors, recs[0].phash), Error);
  EXPECT_THROW(index.candidate_neighbors(sha256(as_bytes("nope"))), Error);
}

TEST(Index, RemovedImagesNeverReturned) {
  DescriptorIndex index;
  const auto a = features_of(synth::scene(1), "a");
  auto b = a;
  b.content_hash = sha256(as_bytes("b"));
  index.insert(a.content_hash, a.descriptors, a.phash);
  index.insert(b.content_hash, b.descriptors, b.phash);
  EXPECT_EQ(index.candidates(a.descriptors, a.phash).size(), 2u);
  EXPECT_TRUE(index.remove(b.content_hash));
  EXPECT_FALSE(index.remove(b.content_hash));
  const auto c = index.candidates(a.descriptors, a.phash);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].hash, a.content_hash);
  EXPECT_TRUE(index.candidate_neighbors(a.content_hash).empty());
  EXPECT_EQ(index.size(), 1u);
}

TEST(Index, EmptyDescriptorSetStillHasPhash) {
  DescriptorIndex index;
  const ContentHash flat = sha256(as_bytes("flat"));
  const ContentHash flat2 = sha256(as_bytes("flat2"));
  index.insert(flat, {}, PHash64{0});
  index.insert(flat2, {}, PHash64{0b111});
  EXPECT_EQ(index.bucket_entries(flat), 0u);
  const auto c = index.candidate_neighbors(flat);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].hash, flat2);
  EXPECT_EQ(c[0].phash_distance, 3);
  EXPECT_EQ(c[0].collisions, 0);
}

TEST(Index, DuplicateUnderAnotherHashViaPhash) {
  DescriptorIndex index;
  const auto a = features_of(synth::scene(2), "post1");
  index.insert(a.content_hash, {}, a.phash);
  const ContentHash other = sha256(as_bytes("post2"));
  index.insert(other, {}, a.phash);
  const auto c = index.candidate_neighbors(a.content_hash);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].hash, other);
  EXPECT_EQ(c[0].phash_distance, 0);
}

TEST(Index, NoisePairsAreNotCandidates) {
  DescriptorIndex index;
  std::vector<FeatureRecord> recs;
  for (int i = 0; i < 50; ++i) {
    recs.push_back(features_of(encode_png(synth::white_noise(1000 + static_cast<std::uint64_t>(i), 128, 128))));
    index.insert(recs.back().content_hash, recs.back().descriptors, recs.back().phash);
  }
  // Brute force over every pair: no pair shares 3 bucket keys or is within
  // phash distance 10, and the index agrees.
  int brute = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (std::size_t j = i + 1; j < recs.size(); ++j) {
      int collisions = 0;
      for (const auto& x : recs[i].descriptors)
        for (const auto& y : recs[j].descriptors)
          for (int t = 0; t < DescriptorIndex::kTables; ++t) collisions += x.descriptor.slice(t) == y.descriptor.slice(t);
      if (collisions >= 3 || hamming(recs[i].phash, recs[j].phash) <= 10) ++brute;
    }
  }
  EXPECT_EQ(brute, 0);
  std::size_t found = 0;
  for (const auto& r : recs) found += index.candidate_neighbors(r.content_hash).size();
  EXPECT_EQ(found, 0u);
}

TEST(Index, RecompressedCopyIsCandidate) {
  DescriptorIndex index;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto r = features_of(encode_png(synth::scene(200 + s)));
    index.insert(r.content_hash, r.descriptors, r.phash);
  }
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto orig = features_of(encode_png(synth::scene(200 + s)));
    const auto q70 = features_of(encode_jpeg(synth::scene(200 + s), 70));
    const auto c = index.candidates(q70.descriptors, q70.phash);
    EXPECT_TRUE(std::any_of(c.begin(), c.end(), [&](const Candidate& x) { return x.hash == orig.content_hash; }));
  }
}

TEST(Index, RebuildReproducesCandidates) {
  std::vector<FeatureRecord> recs;
  const auto corpus = synth::cluster_corpus(5, 40, 4, 5);
  for (const auto& im : corpus.images) recs.push_back(features_of(im.bytes));
  DescriptorIndex a;
  DescriptorIndex b;
  for (const auto& r : recs) a.insert(r.content_hash, r.descriptors, r.phash);
  for (auto it = recs.rbegin(); it != recs.rend(); ++it) b.insert(it->content_hash, it->descriptors, it->phash);
  for (const auto& r : recs) {
    const auto ca = a.candidate_neighbors(r.content_hash);
    const auto cb = b.candidate_neighbors(r.content_hash);
    ASSERT_EQ(ca.size(), cb.size());
    for (std::size_t i = 0; i < ca.size(); ++i) {
      EXPECT_EQ(ca[i].hash, cb[i].hash);
      EXPECT_EQ(ca[i].collisions, cb[i].collisions);
    }
    for (std::size_t i = 1; i < ca.size(); ++i) {
      EXPECT_TRUE(ca[i - 1].collisions > ca[i].collisions ||
                  (ca[i - 1].collisions == ca[i].collisions && ca[i - 1].hash < ca[i].hash));
    }
  }
}

TEST(Verify, IdenticalCopyIsIdentity) {
  const auto a = features_of(synth::scene(3), "a");
  auto b = a;
  b.content_hash = sha256(as_bytes("b"));
  const auto e = verify_features(a, b);
  ASSERT_TRUE(e.has_value());
  EXPECT_LE(std::abs(e->transform.a - 1), 0.01);
  EXPECT_LE(std::abs(e->transform.d - 1), 0.01);
  EXPECT_LE(std::abs(e->transform.tx), 1.0);
  EXPECT_LE(std::abs(e->transform.ty), 1.0);
  EXPECT_EQ(e->inliers, e->raw_matches);
  EXPECT_DOUBLE_EQ(e->score, std::min(1.0, e->inliers / 50.0));
  EXPECT_LT(e->hash_a, e->hash_b);
  EXPECT_EQ(e->type, "descriptor");
  // Same hash on both sides is not an edge.
  EXPECT_FALSE(verify_features(a, a).has_value());
}

TEST(Verify, CropRecoversOffset) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const RasterImage base = synth::scene(300 + seed);
    const int ox = 20 + static_cast<int>(seed) * 7;
    const int oy = 40 - static_cast<int>(seed) * 5;
    const RasterImage cropped = synth::crop(base, ox, oy, 198, 198);  // ~60% of the area
    const auto fa = features_of(base, "base" + std::to_string(seed));
    const auto fb = features_of(cropped, "crop" + std::to_string(seed));
    const auto e = verify_oriented(fa, fb);
    ASSERT_TRUE(e.has_value()) << seed;
    EXPECT_NEAR(e->transform.tx, -ox, 5.0) << seed;
    EXPECT_NEAR(e->transform.ty, -oy, 5.0) << seed;
    // Canonical verification agrees up to orientation.
    const auto canon = verify_features(fb, fa);
    ASSERT_TRUE(canon.has_value());
    const double sign = canon->hash_a == fa.content_hash ? -1.0 : 1.0;
    EXPECT_NEAR(canon->transform.tx, sign * ox, 5.0);
    EXPECT_NEAR(canon->transform.ty, sign * oy, 5.0);
  }
}

TEST(Verify, SymmetricInArguments) {
  const auto corpus = synth::matching_corpus(3, 30, 10);
  std::vector<FeatureRecord> recs;
  for (const auto& im : corpus.images) recs.push_back(features_of(im.bytes));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (std::size_t j = i + 1; j < recs.size(); ++j) {
      EXPECT_EQ(verify_features(recs[i], recs[j]), verify_features(recs[j], recs[i]));
    }
  }
}

TEST(Verify, NoEdgesAmongUnrelatedNoise) {
  std::vector<FeatureRecord> recs;
  for (int i = 0; i < 46; ++i) {
    recs.push_back(features_of(encode_png(synth::white_noise(5000 + static_cast<std::uint64_t>(i), 96, 96))));
  }
  int pairs = 0;
  int edges = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (std::size_t j = i + 1; j < recs.size(); ++j) {
      ++pairs;
      edges += verify_features(recs[i], recs[j]).has_value() ? 1 : 0;
    }
  }
  EXPECT_GE(pairs, 1000);
  EXPECT_EQ(edges, 0);
}

TEST(Verify, MutualMatchesTieBreak) {
  DescriptorSet a(2);
  DescriptorSet b(1);
  a[0].descriptor.set(0);
  a[1].descriptor.set(0);
  b[0].descriptor.set(0);
  const auto m = mutual_matches(a, b, 48);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0], std::make_pair(0, 0));
  b[0].descriptor.words = {~0ULL, ~0ULL, ~0ULL, ~0ULL};
  EXPECT_TRUE(mutual_matches(a, b, 48).empty());
}

TEST(SharedRegion, FullDuplicateCoversImage) {
  const auto a = features_of(synth::scene(4), "x");
  auto b = a;
  b.content_hash = sha256(as_bytes("y"));
  const auto e = verify_features(a, b);
  ASSERT_TRUE(e.has_value());
  const auto [ra, rb] = shared_region(*e, {256, 256}, {256, 256});
  for (const Box& r : {ra, rb}) {
    EXPECT_LE(r.x0, 15 + 8);
    EXPECT_LE(r.y0, 15 + 8);
    EXPECT_GE(r.x1, 255 - 15 - 8);
    EXPECT_GE(r.y1, 255 - 15 - 8);
  }
}

TEST(SharedRegion, MarginAndClamp) {
  MatchEdge e;
  e.region_a = {40, 50, 90, 50};
  e.region_b = {2, 3, 250, 3};
  const auto [ra, rb] = shared_region(e, {256, 256}, {256, 100});
  EXPECT_EQ(ra, (Box{32, 42, 98, 58}));
  EXPECT_EQ(ra.height(), 16);
  EXPECT_EQ(rb, (Box{0, 0, 255, 11}));
}

TEST(SharedRegion, SharedLogoBounds) {
  // The same textured logo pasted into two calm, unrelated photos.
  const RasterImage logo = synth::crop(synth::scene(77), 60, 60, 90, 90);
  auto paste = [&](std::uint64_t seed, int x, int y) {
    RasterImage img = synth::scene(seed, synth::SceneParams{256, 256, 5, 2});
    for (int j = 0; j < logo.height; ++j)
      for (int i = 0; i < logo.width; ++i) img.at(x + i, y + j) = logo.at(i, j);
    return img;
  };
  const Box logo_a{20, 30, 109, 119};
  const Box logo_b{140, 120, 229, 209};
  const auto fa = features_of(paste(501, logo_a.x0, logo_a.y0), "photo-a");
  const auto fb = features_of(paste(502, logo_b.x0, logo_b.y0), "photo-b");
  const auto e = verify_oriented(fa, fb);
  ASSERT_TRUE(e.has_value());
  MatchEdge edge = *e;
  const auto [ra, rb] = shared_region(edge, {256, 256}, {256, 256});
  auto grown = [](Box b) { return Box{b.x0 - 8, b.y0 - 8, b.x1 + 8, b.y1 + 8}; };
  auto inside = [](const Box& in, const Box& out) {
    return in.x0 >= out.x0 && in.y0 >= out.y0 && in.x1 <= out.x1 && in.y1 <= out.y1;
  };
  EXPECT_TRUE(inside(ra, grown(logo_a)));
  EXPECT_TRUE(inside(rb, grown(logo_b)));
  EXPECT_GE(iou(ra, logo_a), 0.5);
  EXPECT_GE(iou(rb, logo_b), 0.5);
}

}  // namespace
}  // namespace mews
