#include "mews/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mews/codec.hpp"
#include "mews/features.hpp"
#include "mews/forensics.hpp"

namespace mews::synth {

namespace {

constexpr double kTwoPi = 6.283185307179586;

std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

void fill_rect(RasterImage& img, int x0, int y0, int w, int h, std::uint8_t v) {
  for (int y = std::max(0, y0); y < std::min(img.height, y0 + h); ++y) {
    for (int x = std::max(0, x0); x < std::min(img.width, x0 + w); ++x) img.at(x, y) = v;
  }
}

void fill_ellipse(RasterImage& img, int cx, int cy, int rx, int ry, std::uint8_t v) {
  for (int y = std::max(0, cy - ry); y <= std::min(img.height - 1, cy + ry); ++y) {
    for (int x = std::max(0, cx - rx); x <= std::min(img.width - 1, cx + rx); ++x) {
      const double nx = static_cast<double>(x - cx) / rx;
      const double ny = static_cast<double>(y - cy) / ry;
      if (nx * nx + ny * ny <= 1.0) img.at(x, y) = v;
    }
  }
}

// Even-odd scanline fill, sampling pixel centers.
struct Shade {
  double base, gx, gy, cx, cy;
  std::uint8_t at(int x, int y) const {
    return clamp_u8(static_cast<int>(std::lround(base + gx * (x - cx) + gy * (y - cy))));
  }
};

void fill_polygon(RasterImage& img, const std::vector<std::pair<double, double>>& pts, const Shade& v) {
  double ymin = pts[0].second;
  double ymax = pts[0].second;
  for (const auto& q : pts) {
    ymin = std::min(ymin, q.second);
    ymax = std::max(ymax, q.second);
  }
  const int y0 = std::max(0, static_cast<int>(std::floor(ymin)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(ymax)));
  std::vector<double> xs;
  for (int y = y0; y <= y1; ++y) {
    const double sy = y + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto& [ax, ay] = pts[i];
      const auto& [bx, by] = pts[(i + 1) % pts.size()];
      if ((ay <= sy && by > sy) || (by <= sy && ay > sy)) xs.push_back(ax + (sy - ay) / (by - ay) * (bx - ax));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int xa = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      const int xb = std::min(img.width - 1, static_cast<int>(std::floor(xs[k + 1] - 0.5)));
      for (int x = xa; x <= xb; ++x) img.at(x, y) = v.at(x, y);
    }
  }
}

void paste(RasterImage& dst, const RasterImage& src, int sx, int sy, int w, int h, int dx, int dy) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) dst.at(dx + x, dy + y) = src.at(sx + x, sy + y);
  }
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
  }
}

}  // namespace

RasterImage scene(std::uint64_t seed, const SceneParams& p) {
  std::mt19937_64 rng(seed);
  RasterImage img(p.width, p.height);
  const int g0 = uniform(rng, 60, 190);
  const int g1 = uniform(rng, 60, 190);
  const double angle = unit(rng) * kTwoPi;
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  const double span = std::abs(ca) * p.width + std::abs(sa) * p.height;
  const double origin = std::min(0.0, ca * p.width) + std::min(0.0, sa * p.height);
  // Low-frequency shading so flat regions are not exactly flat.
  std::array<std::array<double, 4>, 3> waves{};
  for (auto& w : waves) w = {unit(rng) * 0.08, unit(rng) * 0.08, unit(rng) * kTwoPi, 4.0 + 8.0 * unit(rng)};
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      double v = g0 + (g1 - g0) * (x * ca + y * sa - origin) / span;
      for (const auto& w : waves) v += w[3] * std::sin(w[0] * x + w[1] * y + w[2]);
      img.at(x, y) = clamp_u8(static_cast<int>(std::lround(v)));
    }
  }
  for (int i = 0; i < p.polygons; ++i) {
    const double cx = uniform(rng, 0, p.width - 1);
    const double cy = uniform(rng, 0, p.height - 1);
    const double radius = 5.0 + 20.0 * unit(rng);
    const int sides = uniform(rng, 3, 5);
    const double rot = unit(rng) * kTwoPi;
    std::vector<std::pair<double, double>> pts;
    for (int k = 0; k < sides; ++k) {
      const double a = rot + kTwoPi * (k + 0.6 * unit(rng) - 0.3) / sides;
      const double r = radius * (0.6 + 0.4 * unit(rng));
      pts.emplace_back(cx + r * std::cos(a), cy + r * std::sin(a));
    }
    const Shade shade{static_cast<double>(uniform(rng, 0, 255)), p.shading * (unit(rng) - 0.5),
                      p.shading * (unit(rng) - 0.5), cx, cy};
    fill_polygon(img, pts, shade);
  }
  for (int i = 0; i < p.ellipses; ++i) {
    const int rx = uniform(rng, 4, 24);
    const int ry = uniform(rng, 4, 24);
    const int cx = uniform(rng, 0, p.width - 1);
    const int cy = uniform(rng, 0, p.height - 1);
    fill_ellipse(img, cx, cy, rx, ry, static_cast<std::uint8_t>(uniform(rng, 0, 255)));
  }
  if (p.noise > 0) {
    for (auto& px : img.pixels) px = clamp_u8(px + uniform(rng, -p.noise, p.noise));
  }
  return img;
}

RasterImage white_noise(std::uint64_t seed, int width, int height) {
  std::mt19937_64 rng(seed);
  RasterImage img(width, height);
  for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

RasterImage crop(const RasterImage& img, int x, int y, int width, int height) {
  RasterImage out(width, height);
  paste(out, img, x, y, width, height, 0, 0);
  return out;
}

RasterImage overlay_caption(const RasterImage& img, double area_fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RasterImage out = img;
  const int band = std::max(1, static_cast<int>(std::floor(area_fraction * img.height)));
  const int y0 = (rng() & 1) ? 0 : img.height - band;
  fill_rect(out, 0, y0, img.width, band, static_cast<std::uint8_t>(uniform(rng, 10, 40)));
  // Glyph strokes: short bright bars laid out in a text-like row.
  const int glyph_h = std::max(2, band * 3 / 5);
  const int gy = y0 + (band - glyph_h) / 2;
  for (int x = uniform(rng, 2, 8); x < img.width - 4;) {
    const int glyph_w = uniform(rng, 3, 7);
    const int strokes = uniform(rng, 1, 3);
    for (int s = 0; s < strokes; ++s) {
      const bool vertical = rng() & 1;
      if (vertical) {
        fill_rect(out, x + uniform(rng, 0, glyph_w - 1), gy, 2, glyph_h, 235);
      } else {
        fill_rect(out, x, gy + uniform(rng, 0, glyph_h - 1), glyph_w, 2, 235);
      }
    }
    x += glyph_w + uniform(rng, 2, 9);
  }
  return out;
}

RasterImage jpeg_roundtrip(const RasterImage& img, int quality) {
  return decode_any_size(encode_jpeg(img, quality));
}

Variant make_variant(const RasterImage& base, std::uint64_t seed, const VariantParams& p) {
  std::mt19937_64 rng(seed);
  Variant v;
  const double min_side = std::sqrt(p.min_crop_area);
  const double sw = min_side + (1.0 - min_side) * unit(rng);
  const double min_h = std::max(p.min_crop_area / sw, min_side);
  const double sh = std::min(1.0, min_h + (1.0 - min_h) * unit(rng));
  const int cw = std::clamp(static_cast<int>(std::ceil(sw * base.width)), 1, base.width);
  const int ch = std::clamp(static_cast<int>(std::ceil(sh * base.height)), 1, base.height);
  v.crop_x = uniform(rng, 0, base.width - cw);
  v.crop_y = uniform(rng, 0, base.height - ch);
  v.crop_area = static_cast<double>(cw) * ch / (static_cast<double>(base.width) * base.height);
  RasterImage img = crop(base, v.crop_x, v.crop_y, cw, ch);
  if (p.max_overlay > 0.0 && (rng() & 1)) {
    v.overlay = 0.05 + (p.max_overlay - 0.05) * unit(rng);
    img = overlay_caption(img, v.overlay, rng());
  }
  v.quality = uniform(rng, p.min_quality, p.max_quality);
  v.bytes = encode_jpeg(img, v.quality);
  v.image = decode_any_size(v.bytes);
  return v;
}

CopyMoveForgery copy_move_forgery(std::uint64_t seed, const ForgeryParams& p) {
  std::mt19937_64 rng(seed);
  CopyMoveForgery out;
  out.image = scene(rng(), SceneParams{p.width, p.height});
  constexpr int kMargin = 8;
  const int s = uniform(rng, p.min_patch, p.max_patch);
  for (;;) {
    const int sx = uniform(rng, kMargin, p.width - kMargin - s);
    const int sy = uniform(rng, kMargin, p.height - kMargin - s);
    const int tx = uniform(rng, kMargin, p.width - kMargin - s);
    const int ty = uniform(rng, kMargin, p.height - kMargin - s);
    const int dx = tx - sx;
    const int dy = ty - sy;
    if (dx < 0 || (dx == 0 && dy <= 0)) continue;
    if (dx * dx + dy * dy < p.min_offset * p.min_offset) continue;
    if (std::abs(dx) < s && std::abs(dy) < s) continue;
    const RasterImage original = out.image;
    paste(out.image, original, sx, sy, s, s, tx, ty);
    out.source = {sx, sy, sx + s - 1, sy + s - 1};
    out.destination = {tx, ty, tx + s - 1, ty + s - 1};
    return out;
  }
}

SpliceForgery splice_forgery(std::uint64_t seed, const SpliceParams& p) {
  std::mt19937_64 rng(seed);
  const SceneParams sp{p.width, p.height};
  RasterImage host = jpeg_roundtrip(scene(rng(), sp), p.host_quality);
  const RasterImage donor = jpeg_roundtrip(scene(rng(), sp), p.patch_quality);
  const int w = uniform(rng, p.min_patch, p.max_patch);
  const int h = uniform(rng, p.min_patch, p.max_patch);
  const int x = uniform(rng, 0, p.width - w);
  const int y = uniform(rng, 0, p.height - h);
  const int sx = uniform(rng, 0, p.width - w);
  const int sy = uniform(rng, 0, p.height - h);
  paste(host, donor, sx, sy, w, h, x, y);
  SpliceForgery out;
  out.bytes = encode_png(host);
  out.image = std::move(host);
  out.mask = {x, y, x + w - 1, y + h - 1};
  return out;
}

Corpus matching_corpus(std::uint64_t seed, int total, int pairs) {
  std::mt19937_64 rng(seed);
  Corpus corpus;
  for (int g = 0; g < pairs; ++g) {
    const RasterImage base = scene(rng());
    corpus.images.push_back({"", encode_png(base), g});
    corpus.images.push_back({"", make_variant(base, rng()).bytes, g});
  }
  for (int i = 2 * pairs; i < total; ++i) {
    const RasterImage img = scene(rng());
    const int quality = uniform(rng, 70, 95);
    corpus.images.push_back({"", (rng() & 1) ? encode_png(img) : encode_jpeg(img, quality), -1});
  }
  shuffle(corpus.images, rng);
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    auto& im = corpus.images[i];
    im.name = fmt::format("img_{:04}.{}", i, sniff_format(im.bytes) == ImageFormat::png ? "png" : "jpg");
  }
  return corpus;
}

Corpus cluster_corpus(std::uint64_t seed, int total, int groups, int group_size) {
  std::mt19937_64 rng(seed);
  Corpus corpus;
  for (int g = 0; g < groups; ++g) {
    const RasterImage base = scene(rng());
    corpus.images.push_back({"", encode_png(base), g});
    for (int k = 1; k < group_size; ++k) {
      corpus.images.push_back({"", make_variant(base, rng()).bytes, g});
    }
  }
  for (int i = groups * group_size; i < total; ++i) {
    corpus.images.push_back({"", encode_png(scene(rng())), -1});
  }
  shuffle(corpus.images, rng);
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    auto& im = corpus.images[i];
    im.name = fmt::format("img_{:04}.{}", i, sniff_format(im.bytes) == ImageFormat::png ? "png" : "jpg");
  }
  return corpus;
}

std::string feed_line(const std::string& post_id, std::string_view platform, Instant timestamp,
                      const std::string& text, const std::vector<std::string>& images) {
  nlohmann::json j{{"post_id", post_id},
                   {"platform", std::string(platform)},
                   {"timestamp", format_rfc3339(timestamp)},
                   {"text", text},
                   {"images", images}};
  return j.dump();
}

std::vector<std::string> corpus_feed(const Corpus& corpus, Instant start, Seconds spacing) {
  static constexpr std::array<std::string_view, 4> kPlatforms = {"twitter", "facebook", "instagram", "telegram"};
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    const Instant ts = start + static_cast<int>(i) * spacing;
    lines.push_back(feed_line(fmt::format("c{:04}", i), kPlatforms[i % kPlatforms.size()], ts,
                              fmt::format("corpus post {}", i), {corpus.images[i].name}));
  }
  return lines;
}

Timeline trend_timeline(std::uint64_t seed, const TimelineParams& p) {
  static constexpr std::array<std::string_view, 4> kPlatforms = {"twitter", "facebook", "instagram", "telegram"};
  std::mt19937_64 rng(seed);
  Timeline out;

  // The planted cluster: a forgery strong enough to be flagged manipulated.
  for (;;) {
    const auto forgery = copy_move_forgery(rng(), ForgeryParams{256, 256, 80, 96, 64});
    const Bytes bytes = encode_png(forgery.image);
    const auto descs = compute_descriptors(forgery.image, detect_keypoints(forgery.image));
    if (analyze_manipulation(forgery.image, descs, sha256(bytes)).verdict >= 0.5) {
      out.files.images.push_back({"planted.png", bytes, 0});
      break;
    }
  }
  for (int g = 1; g < p.clusters; ++g) {
    const RasterImage base = scene(rng());
    out.files.images.push_back({fmt::format("g{:02}_base.png", g), encode_png(base), g});
    for (int v = 0; v < p.variants; ++v) {
      out.files.images.push_back({fmt::format("g{:02}_v{}.jpg", g, v), make_variant(base, rng()).bytes, g});
    }
  }
  std::vector<std::vector<std::string>> names(static_cast<std::size_t>(p.clusters));
  for (const auto& im : out.files.images) names[static_cast<std::size_t>(im.group)].push_back(im.name);

  const Seconds hour{3600};
  out.burst_start = p.start + p.burst_window * hour;
  std::vector<std::pair<Instant, std::string>> posts;
  const int windows = p.days * 24;
  for (int w = 0; w < windows; ++w) {
    const Instant ws = p.start + w * hour;
    for (int g = 0; g < p.clusters; ++g) {
      const auto& pool = names[static_cast<std::size_t>(g)];
      if (g == out.planted_group && w == p.burst_window) {
        for (int k = 0; k < p.burst_posts; ++k) {
          const Instant ts = ws + Seconds{uniform(rng, 0, 3599)};
          posts.emplace_back(ts, feed_line(fmt::format("burst-{:02}", k), k % 2 == 0 ? "twitter" : "telegram", ts,
                                           "breaking: shocking picture", {pool[0]}));
        }
        continue;
      }
      if (unit(rng) >= p.background_rate) continue;
      const Instant ts = ws + Seconds{uniform(rng, 0, 3599)};
      const auto& img = pool[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(pool.size()) - 1))];
      posts.emplace_back(ts, feed_line(fmt::format("q{:02}-{:03}", g, w), kPlatforms[rng() % kPlatforms.size()], ts,
                                       fmt::format("cluster {} chatter", g), {img}));
    }
  }
  std::stable_sort(posts.begin(), posts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [ts, line] : posts) out.lines.push_back(std::move(line));
  return out;
}

}  // namespace mews::synth
