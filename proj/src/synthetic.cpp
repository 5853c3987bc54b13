#include "ahf/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "ahf/errors.hpp"
#include "ahf/image_io.hpp"
#include "ahf/random.hpp"

namespace ahf::data {

namespace {

struct Palette {
  cv::Vec3d base, stripe, spot;
};

Palette palette_for(const SynthConfig& cfg, int index) {
  Rng rng(derive_seed(cfg.seed, {0x9a1e77e, static_cast<std::uint64_t>(index)}));
  auto colour = [&rng](double lo, double hi) {
    return cv::Vec3d(uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi));
  };
  Palette p;
  p.base = colour(0.55, 0.95);
  p.stripe = colour(0.05, 0.35);
  p.spot = colour(0.3, 0.9);
  return p;
}

cv::Vec3d random_colour(Rng& rng) { return {uniform01(rng), uniform01(rng), uniform01(rng)}; }

void draw_clutter(cv::Mat& img, Rng& rng) {
  const int s = img.rows;
  const cv::Vec3d a = random_colour(rng) * 0.8;
  const cv::Vec3d b = random_colour(rng) * 0.8;
  const double gx = uniform(rng, -1.0, 1.0);
  const double gy = uniform(rng, -1.0, 1.0);
  for (int y = 0; y < s; ++y) {
    auto* row = img.ptr<cv::Vec3d>(y);
    for (int x = 0; x < s; ++x) {
      const double t = std::clamp(0.5 + 0.5 * (gx * (x - s / 2.0) + gy * (y - s / 2.0)) / s, 0.0, 1.0);
      row[x] = a * (1.0 - t) + b * t;
    }
  }
  const int blobs = 8 + static_cast<int>(uniform_index(rng, 8));
  for (int i = 0; i < blobs; ++i) {
    const cv::Point c(static_cast<int>(uniform_index(rng, s)), static_cast<int>(uniform_index(rng, s)));
    const int r = 2 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s / 8)));
    const cv::Vec3d col = random_colour(rng);
    if (coin(rng, 0.5))
      cv::circle(img, c, r, cv::Scalar(col[0], col[1], col[2]), cv::FILLED, cv::LINE_AA);
    else
      cv::rectangle(img, cv::Rect(c.x, c.y, r * 2, r), cv::Scalar(col[0], col[1], col[2]), cv::FILLED);
  }
  const int lines = 15 + static_cast<int>(uniform_index(rng, 15));
  for (int i = 0; i < lines; ++i) {
    const cv::Point p0(static_cast<int>(uniform_index(rng, s)), static_cast<int>(uniform_index(rng, s)));
    const cv::Point p1(static_cast<int>(uniform_index(rng, s)), static_cast<int>(uniform_index(rng, s)));
    const cv::Vec3d col = random_colour(rng);
    cv::line(img, p0, p1, cv::Scalar(col[0], col[1], col[2]), 1, cv::LINE_8);
  }
  for (int y = 0; y < s; ++y) {
    auto* row = img.ptr<cv::Vec3d>(y);
    for (int x = 0; x < s; ++x)
      for (int c = 0; c < 3; ++c) row[x][c] += 0.06 * standard_normal(rng);
  }
}

}  // namespace

std::string identity_name(int identity) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "id%03d", identity);
  return buf;
}

IdentityTexture identity_texture(const SynthConfig& cfg, int identity) {
  Rng rng(derive_seed(cfg.seed, {0x1de, static_cast<std::uint64_t>(identity)}));
  IdentityTexture t;
  t.stripe_frequency = uniform(rng, 0.10, 0.30);
  t.stripe_angle = uniform(rng, 0.0, std::numbers::pi);
  t.stripe_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  t.palette = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(std::max(1, cfg.palette_size))));
  const int spots = 2 + static_cast<int>(uniform_index(rng, 7));
  t.spot_radius = uniform(rng, 0.10, 0.18);
  for (int i = 0; i < spots; ++i) {
    const double r = 0.8 * std::sqrt(uniform01(rng));
    const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    t.spots.emplace_back(r * std::cos(a), r * std::sin(a));
  }
  return t;
}

SynthImage render_synthetic(const SynthConfig& cfg, int identity, int image) {
  const int s = cfg.size;
  Rng rng(derive_seed(cfg.seed, {0x1a6e, static_cast<std::uint64_t>(identity), static_cast<std::uint64_t>(image)}));
  const IdentityTexture tex = identity_texture(cfg, identity);
  const Palette pal = palette_for(cfg, tex.palette);

  SynthImage out;
  out.identity = identity_name(identity);
  out.identity_index = identity;
  out.rgb = cv::Mat(s, s, CV_64FC3, cv::Scalar::all(0.5));
  out.mask = cv::Mat::zeros(s, s, CV_8UC1);
  if (cfg.background == Background::Clutter) draw_clutter(out.rgb, rng);

  // Object pose: area fraction drawn uniformly, aspect ratio in [0.8, 1.25].
  const double area = uniform(rng, cfg.min_area_fraction, cfg.max_area_fraction) * s * s;
  const double aspect = std::exp(uniform(rng, std::log(0.8), std::log(1.25)));
  const double ax = std::sqrt(area / std::numbers::pi * aspect);
  const double ay = std::sqrt(area / std::numbers::pi / aspect);
  const double cx = (s - 1) / 2.0 + uniform(rng, -0.08, 0.08) * s;
  const double cy = (s - 1) / 2.0 + uniform(rng, -0.08, 0.08) * s;
  const double tilt = uniform(rng, -0.5, 0.5);
  const double light = uniform(rng, 0.8, 1.15);
  const double ct = std::cos(tilt), st = std::sin(tilt);
  const double local_scale = 20.0;  // object-local pixels per unit radius
  const double ca = std::cos(tex.stripe_angle), sa = std::sin(tex.stripe_angle);

  for (int y = 0; y < s; ++y) {
    auto* row = out.rgb.ptr<cv::Vec3d>(y);
    auto* mrow = out.mask.ptr<unsigned char>(y);
    for (int x = 0; x < s; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double u = (ct * dx + st * dy) / ax;
      const double v = (-st * dx + ct * dy) / ay;
      if (u * u + v * v > 1.0) continue;
      const double lx = u * local_scale, ly = v * local_scale;
      const double phase = 2.0 * std::numbers::pi * tex.stripe_frequency * (ca * lx + sa * ly) + tex.stripe_phase;
      const double w = std::clamp(0.5 + 2.0 * std::sin(phase), 0.0, 1.0);
      cv::Vec3d c = pal.base * (1.0 - w) + pal.stripe * w;
      for (const auto& sp : tex.spots) {
        const double ddx = u - sp.x, ddy = v - sp.y;
        if (ddx * ddx + ddy * ddy < tex.spot_radius * tex.spot_radius) c = pal.spot;
      }
      row[x] = c * light;
      mrow[x] = 255;
    }
  }
  out.rgb = cv::min(cv::max(out.rgb, 0.0), 1.0);
  return out;
}

std::vector<SynthImage> generate_synthetic(const SynthConfig& cfg) {
  if (cfg.identities < 1 || cfg.images_per_identity < 1 || cfg.size < 8)
    throw parameter_error("synth: identities, images per identity and size must be positive");
  std::vector<SynthImage> out;
  out.reserve(static_cast<std::size_t>(cfg.identities) * cfg.images_per_identity);
  for (int id = 0; id < cfg.identities; ++id)
    for (int i = 0; i < cfg.images_per_identity; ++i) out.push_back(render_synthetic(cfg, id, i));
  return out;
}

std::string format_synth_config(const SynthConfig& cfg) {
  std::ostringstream os;
  os << "identities = " << cfg.identities << '\n'
     << "images_per_identity = " << cfg.images_per_identity << '\n'
     << "size = " << cfg.size << '\n'
     << "seed = " << cfg.seed << '\n'
     << "background = " << (cfg.background == Background::Clutter ? "clutter" : "constant") << '\n'
     << "min_area_fraction = " << cfg.min_area_fraction << '\n'
     << "max_area_fraction = " << cfg.max_area_fraction << '\n'
     << "palette_size = " << cfg.palette_size << '\n';
  return os.str();
}

Manifest write_synthetic_dataset(const SynthConfig& cfg, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  Manifest m;
  m.name = "synthetic";
  m.root = dir;
  for (int id = 0; id < cfg.identities; ++id) {
    for (int i = 0; i < cfg.images_per_identity; ++i) {
      const SynthImage img = render_synthetic(cfg, id, i);
      char file[64];
      std::snprintf(file, sizeof file, "%s_%03d.png", img.identity.c_str(), i);
      save_image(dir / "images" / file, img.rgb);
      cv::Mat mask;
      img.mask.convertTo(mask, CV_64FC1, 1.0 / 255.0);
      save_image(dir / "masks" / file, mask);
      m.records.push_back({std::string("images/") + file, img.identity, "synthetic"});
    }
  }
  write_manifest(dir / "manifest.tsv", m);
  std::ofstream(dir / "synth_config.txt") << format_synth_config(cfg);
  return m;
}

}  // namespace ahf::data
