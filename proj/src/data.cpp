#include "m2s/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "m2s/errors.hpp"
#include "m2s/rng.hpp"

namespace m2s {

namespace fs = std::filesystem;

std::string forgery_type_name(ForgeryType t) {
  switch (t) {
    case ForgeryType::copy_move: return "copy_move";
    case ForgeryType::splice: return "splice";
    case ForgeryType::unknown: return "unknown";
  }
  return "unknown";
}

ForgeryType parse_forgery_type(const std::string& name) {
  if (name == "copy_move" || name == "copy-move") return ForgeryType::copy_move;
  if (name == "splice" || name == "splicing") return ForgeryType::splice;
  if (name == "unknown" || name.empty()) return ForgeryType::unknown;
  throw ConfigError("unknown forgery type '" + name + "'");
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "copy_move" || name == "copy-move") return SynthKind::copy_move;
  if (name == "splice") return SynthKind::splice;
  if (name == "mixed") return SynthKind::mixed;
  throw ConfigError("unknown synthetic kind '" + name + "' (expected copy_move, splice or mixed)");
}

namespace {

const std::set<std::string> kImageExtensions = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

Tensor image_from_mat(const cv::Mat& bgr) {
  const int h = bgr.rows;
  const int w = bgr.cols;
  Tensor out({3, h, w});
  for (int y = 0; y < h; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = row[x][2 - c] / 255.0;
    }
  }
  return out;
}

Tensor mask_from_mat(const cv::Mat& gray) {
  Tensor out({1, gray.rows, gray.cols});
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) out.at(0, y, x) = row[x] / 255.0 >= 0.5 ? 1.0 : 0.0;
  }
  return out;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

cv::Mat mat_from_image(const Tensor& img) {
  cv::Mat out(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) row[x][2 - c] = to_byte(img.at(c, y, x));
    }
  }
  return out;
}

cv::Mat mat_from_mask(const Tensor& mask) {
  cv::Mat out(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y) {
    auto* row = out.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.width(); ++x) row[x] = to_byte(mask.at(0, y, x));
  }
  return out;
}

std::map<std::string, ForgeryType> read_types(const fs::path& file) {
  std::map<std::string, ForgeryType> types;
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("id,", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("malformed line in " + file.string() + ": " + line);
    types[line.substr(0, comma)] = parse_forgery_type(line.substr(comma + 1));
  }
  return types;
}

}  // namespace

Corpus load_corpus(const fs::path& root, int resolution) {
  if (resolution <= 0) throw ConfigError("corpus resolution must be positive");
  const fs::path image_dir = root / "images";
  const fs::path mask_dir = root / "masks";
  if (!fs::is_directory(image_dir)) throw IoError("missing image directory " + image_dir.string());
  if (!fs::is_directory(mask_dir)) throw IoError("missing mask directory " + mask_dir.string());

  std::map<std::string, fs::path> images;
  std::map<std::string, fs::path> masks;
  Corpus corpus;
  for (const auto& entry : fs::directory_iterator(image_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = lower(entry.path().extension().string());
    if (!kImageExtensions.contains(ext)) {
      corpus.skipped.push_back({entry.path(), "unsupported extension"});
      continue;
    }
    const auto id = entry.path().stem().string();
    if (images.contains(id)) {
      corpus.skipped.push_back({entry.path(), "duplicate id " + id});
      continue;
    }
    images[id] = entry.path();
  }
  for (const auto& entry : fs::directory_iterator(mask_dir)) {
    if (!entry.is_regular_file()) continue;
    if (lower(entry.path().extension().string()) != ".png") {
      corpus.skipped.push_back({entry.path(), "mask is not a PNG"});
      continue;
    }
    masks[entry.path().stem().string()] = entry.path();
  }
  for (const auto& [id, path] : images) {
    if (!masks.contains(id)) corpus.skipped.push_back({path, "no mask for id " + id});
  }
  for (const auto& [id, path] : masks) {
    if (!images.contains(id)) corpus.skipped.push_back({path, "no image for id " + id});
  }

  std::map<std::string, ForgeryType> types;
  if (fs::exists(root / "types.csv")) types = read_types(root / "types.csv");

  const cv::Size target(resolution, resolution);
  for (const auto& [id, image_path] : images) {
    const auto mask_it = masks.find(id);
    if (mask_it == masks.end()) continue;
    cv::Mat img = cv::imread(image_path.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw IoError("unreadable image " + image_path.string());
    cv::Mat msk = cv::imread(mask_it->second.string(), cv::IMREAD_GRAYSCALE);
    if (msk.empty()) throw IoError("unreadable mask " + mask_it->second.string());
    if (img.size() != target) cv::resize(img, img, target, 0, 0, cv::INTER_LINEAR);
    if (msk.size() != target) cv::resize(msk, msk, target, 0, 0, cv::INTER_NEAREST);
    ForgerySample s;
    s.image = image_from_mat(img);
    s.mask = mask_from_mat(msk);
    s.id = id;
    if (auto t = types.find(id); t != types.end()) s.type = t->second;
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

LoadedImage load_image(const fs::path& path, int resolution) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw IoError("unreadable image " + path.string());
  LoadedImage out;
  out.original_height = img.rows;
  out.original_width = img.cols;
  const cv::Size target(resolution, resolution);
  if (img.size() != target) cv::resize(img, img, target, 0, 0, cv::INTER_LINEAR);
  out.image = image_from_mat(img);
  return out;
}

Tensor load_gray_map(const fs::path& path) {
  cv::Mat g = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (g.empty()) throw IoError("unreadable image " + path.string());
  Tensor out({g.rows, g.cols});
  for (int y = 0; y < g.rows; ++y) {
    const auto* row = g.ptr<std::uint8_t>(y);
    for (int x = 0; x < g.cols; ++x) out[static_cast<std::size_t>(y) * g.cols + x] = row[x] / 255.0;
  }
  return out;
}

void write_gray_png(const fs::path& path, const Tensor& map) {
  const Tensor m = map.rank() == 2 ? map.reshaped({1, map.dim(0), map.dim(1)}) : map;
  require_feature_map(m, "grayscale map");
  if (m.channels() != 1) throw DimensionError("grayscale map must have one channel");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat_from_mask(m))) throw IoError("cannot write " + path.string());
}

void write_corpus(const fs::path& root, const std::vector<ForgerySample>& samples) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::ofstream types(root / "types.csv");
  if (!types) throw IoError("cannot write " + (root / "types.csv").string());
  types << "id,type\n";
  for (const auto& s : samples) {
    const auto img_path = root / "images" / (s.id + ".png");
    const auto mask_path = root / "masks" / (s.id + ".png");
    if (!cv::imwrite(img_path.string(), mat_from_image(s.image)))
      throw IoError("cannot write " + img_path.string());
    if (!cv::imwrite(mask_path.string(), mat_from_mask(s.mask)))
      throw IoError("cannot write " + mask_path.string());
    types << s.id << ',' << forgery_type_name(s.type) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Procedural textures and shapes

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Value noise on a lattice with `cell` pixels per cell.
std::vector<double> value_noise(Rng& rng, int size, int cell) {
  const int n = size / cell + 2;
  std::vector<double> lattice(static_cast<std::size_t>(n) * n);
  for (auto& v : lattice) v = rng.uniform();
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const int y0 = static_cast<int>(fy);
    const double ty = smoothstep(fy - y0);
    for (int x = 0; x < size; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const int x0 = static_cast<int>(fx);
      const double tx = smoothstep(fx - x0);
      const auto at = [&](int r, int c) { return lattice[static_cast<std::size_t>(r) * n + c]; };
      const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
      const double bot = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
      out[static_cast<std::size_t>(y) * size + x] = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

std::vector<double> fractal_noise(Rng& rng, int size) {
  std::vector<double> acc(static_cast<std::size_t>(size) * size, 0.0);
  double amp = 1.0;
  double total = 0.0;
  for (int cell = std::max(2, size / 4); cell >= 2; cell /= 2) {
    const auto layer = value_noise(rng, size, cell);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += amp * layer[i];
    total += amp;
    amp *= 0.5;
  }
  for (auto& v : acc) v /= total;
  return acc;
}

/// Multi-octave colour texture quantised to multiples of 1/255.
Tensor texture(Rng& rng, int size) {
  const auto shared = fractal_noise(rng, size);
  Tensor img({3, size, size});
  for (int c = 0; c < 3; ++c) {
    const auto own = fractal_noise(rng, size);
    const double base = rng.uniform(0.2, 0.8);
    const double contrast = rng.uniform(0.6, 1.4);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const auto i = static_cast<std::size_t>(y) * size + x;
        const double n = 0.6 * shared[i] + 0.4 * own[i];
        const double v = std::clamp(base + contrast * (n - 0.5), 0.0, 1.0);
        img.at(c, y, x) = std::round(v * 255.0) / 255.0;
      }
    }
  }
  return img;
}

struct Point {
  double x, y;
};

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k > 1 ? k - 1 : k);
  return hull;
}

double polygon_area(const std::vector<Point>& poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) / 2.0;
}

Tensor rasterize(const std::vector<Point>& hull, int patch) {
  Tensor fp({patch, patch});
  for (int y = 0; y < patch; ++y) {
    for (int x = 0; x < patch; ++x) {
      const Point p{x + 0.5, y + 0.5};
      bool inside = hull.size() >= 3;
      for (std::size_t i = 0; i < hull.size() && inside; ++i) {
        inside = cross(hull[i], hull[(i + 1) % hull.size()], p) >= 0;
      }
      fp[static_cast<std::size_t>(y) * patch + x] = inside ? 1.0 : 0.0;
    }
  }
  return fp;
}

/// Random convex footprint whose area lies in the requested fraction of the image.
Tensor convex_footprint(Rng& rng, int size, const SynthOptions& opt, int& patch_out) {
  const double image_area = static_cast<double>(size) * size;
  const int min_patch = std::max(3, static_cast<int>(std::ceil(std::sqrt(opt.min_area * image_area))));
  const int max_patch = size / 2;
  if (min_patch > max_patch) throw ConfigError("image too small for the requested forgery area range");
  const double reachable = std::min(opt.max_area, static_cast<double>(max_patch) * max_patch / image_area);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double target = rng.uniform(opt.min_area, std::max(opt.min_area, reachable));
    const int vertices = rng.uniform_int(6, 10);
    std::vector<Point> pts(static_cast<std::size_t>(vertices));
    for (auto& p : pts) p = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
    std::vector<Point> hull = convex_hull(pts);
    const double fill = polygon_area(hull);
    if (fill <= 0.0) continue;
    const int patch = static_cast<int>(std::lround(std::sqrt(target * image_area / fill)));
    if (patch < min_patch || patch > max_patch) continue;
    for (auto& p : hull) p = {p.x * patch, p.y * patch};
    Tensor fp = rasterize(hull, patch);
    double area = 0.0;
    for (double v : fp.values()) area += v;
    const double frac = area / image_area;
    if (frac >= opt.min_area && frac <= opt.max_area) {
      patch_out = patch;
      return fp;
    }
  }
  throw NumericalError("could not draw a forgery footprint within the area bounds");
}

void validate(const SynthOptions& opt, int size) {
  if (size < 16) throw ConfigError("synthetic image size must be at least 16");
  if (!(opt.min_area > 0.0 && opt.min_area <= opt.max_area && opt.max_area <= 0.5))
    throw ConfigError("synthetic area bounds must satisfy 0 < min <= max <= 0.5");
}

}  // namespace

std::pair<int, int> copy_move_source(const CopyMoveTrace& t, int r, int c) {
  const int p = t.patch;
  // Undo the quarter turns (counter-clockwise), then the horizontal flip.
  for (int q = 0; q < t.quarter_turns; ++q) {
    const int nr = c;
    const int nc = p - 1 - r;
    r = nr;
    c = nc;
  }
  if (t.flip) c = p - 1 - c;
  return {r, c};
}

SyntheticForgery synth_copy_move(std::uint64_t seed, int size, const SynthOptions& opt) {
  validate(opt, size);
  Rng rng(seed);
  Tensor image = texture(rng, size);

  CopyMoveTrace t;
  int patch = 0;
  Tensor src_fp = convex_footprint(rng, size, opt, patch);
  t.patch = patch;
  t.quarter_turns = rng.uniform_int(0, 3);
  t.flip = rng.uniform() < 0.5;
  do {
    t.src_row = rng.uniform_int(0, size - patch);
    t.src_col = rng.uniform_int(0, size - patch);
    t.dst_row = rng.uniform_int(0, size - patch);
    t.dst_col = rng.uniform_int(0, size - patch);
  } while (std::abs(t.src_row - t.dst_row) < patch && std::abs(t.src_col - t.dst_col) < patch);

  t.footprint = Tensor({patch, patch});
  Tensor mask({1, size, size});
  const Tensor source = image;
  for (int r = 0; r < patch; ++r) {
    for (int c = 0; c < patch; ++c) {
      const auto [sr, sc] = copy_move_source(t, r, c);
      if (src_fp[static_cast<std::size_t>(sr) * patch + sc] == 0.0) continue;
      t.footprint[static_cast<std::size_t>(r) * patch + c] = 1.0;
      mask.at(0, t.dst_row + r, t.dst_col + c) = 1.0;
      for (int ch = 0; ch < 3; ++ch) {
        image.at(ch, t.dst_row + r, t.dst_col + c) = source.at(ch, t.src_row + sr, t.src_col + sc);
      }
    }
  }
  SyntheticForgery out;
  out.sample = {std::move(image), std::move(mask), ForgeryType::copy_move, {}};
  out.trace = std::move(t);
  return out;
}

SyntheticForgery synth_splice(std::uint64_t seed, int size, const SynthOptions& opt) {
  validate(opt, size);
  Rng rng(seed);
  SpliceTrace t;
  t.host = texture(rng, size);
  t.donor = texture(rng, size);
  int patch = 0;
  t.footprint = convex_footprint(rng, size, opt, patch);
  t.row = rng.uniform_int(0, size - patch);
  t.col = rng.uniform_int(0, size - patch);

  Tensor image = t.host;
  Tensor mask({1, size, size});
  for (int r = 0; r < patch; ++r) {
    for (int c = 0; c < patch; ++c) {
      if (t.footprint[static_cast<std::size_t>(r) * patch + c] == 0.0) continue;
      mask.at(0, t.row + r, t.col + c) = 1.0;
      for (int ch = 0; ch < 3; ++ch) image.at(ch, t.row + r, t.col + c) = t.donor.at(ch, t.row + r, t.col + c);
    }
  }
  SyntheticForgery out;
  out.sample = {std::move(image), std::move(mask), ForgeryType::splice, {}};
  out.trace = std::move(t);
  return out;
}

bool verify_copy_move(const ForgerySample& s, const CopyMoveTrace& t) {
  const int size = s.mask.height();
  const int p = t.patch;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < s.mask.width(); ++x) {
      const int r = y - t.dst_row;
      const int c = x - t.dst_col;
      const bool in_patch = r >= 0 && r < p && c >= 0 && c < p;
      const bool expected = in_patch && t.footprint[static_cast<std::size_t>(r) * p + c] != 0.0;
      if ((s.mask.at(0, y, x) != 0.0) != expected) return false;
      if (!expected) continue;
      const auto [sr, sc] = copy_move_source(t, r, c);
      // Source pixels lie outside the destination square, so they are untouched.
      for (int ch = 0; ch < 3; ++ch) {
        if (s.image.at(ch, y, x) != s.image.at(ch, t.src_row + sr, t.src_col + sc)) return false;
      }
    }
  }
  return true;
}

bool verify_splice(const ForgerySample& s, const SpliceTrace& t) {
  const int p = t.footprint.dim(0);
  for (int y = 0; y < s.mask.height(); ++y) {
    for (int x = 0; x < s.mask.width(); ++x) {
      const int r = y - t.row;
      const int c = x - t.col;
      const bool expected = r >= 0 && r < p && c >= 0 && c < p &&
                            t.footprint[static_cast<std::size_t>(r) * p + c] != 0.0;
      if ((s.mask.at(0, y, x) != 0.0) != expected) return false;
      const Tensor& origin = expected ? t.donor : t.host;
      for (int ch = 0; ch < 3; ++ch) {
        if (s.image.at(ch, y, x) != origin.at(ch, y, x)) return false;
      }
    }
  }
  return true;
}

std::vector<ForgerySample> generate_synthetic(int count, int size, SynthKind kind, std::uint64_t seed,
                                              const SynthOptions& opt) {
  if (count < 0) throw ConfigError("synthetic sample count must be non-negative");
  const std::uint64_t base = derive_seed(seed, SeedStream::synthetic);
  std::vector<ForgerySample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const bool cm = kind == SynthKind::copy_move || (kind == SynthKind::mixed && i % 2 == 0);
    const std::uint64_t s = derive_seed(base, static_cast<std::uint64_t>(i));
    auto f = cm ? synth_copy_move(s, size, opt) : synth_splice(s, size, opt);
    char id[32];
    std::snprintf(id, sizeof id, "%s_%04d", cm ? "cm" : "sp", i);
    f.sample.id = id;
    out.push_back(std::move(f.sample));
  }
  return out;
}

std::vector<std::string> FoldAssignment::test_ids(int fold) const {
  std::vector<std::string> ids;
  for (const auto& [id, f] : fold_of)
    if (f == fold) ids.push_back(id);
  return ids;
}

std::vector<std::string> FoldAssignment::train_ids(int fold) const {
  std::vector<std::string> ids;
  for (const auto& [id, f] : fold_of)
    if (f != fold) ids.push_back(id);
  return ids;
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (const auto& [id, f] : fold_of) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

FoldAssignment kfold(const std::vector<std::string>& ids, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("fold count must be at least 2");
  if (ids.size() < static_cast<std::size_t>(k))
    throw ConfigError("fold count " + std::to_string(k) + " exceeds sample count " + std::to_string(ids.size()));
  std::set<std::string> unique(ids.begin(), ids.end());
  if (unique.size() != ids.size()) throw ConfigError("duplicate sample ids in fold assignment");

  std::vector<std::string> order = ids;
  Rng rng(derive_seed(seed, SeedStream::folds));
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  }
  FoldAssignment out;
  out.k = k;
  out.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i) out.fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return out;
}

}  // namespace m2s
