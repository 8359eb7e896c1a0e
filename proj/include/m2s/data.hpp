#pragma once

// Forgery corpora on disk, the procedural copy-move / splice generator used
// for desk-scale runs, and seeded k-fold assignment.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "m2s/tensor.hpp"

namespace m2s {

enum class ForgeryType { copy_move, splice, unknown };

std::string forgery_type_name(ForgeryType t);
ForgeryType parse_forgery_type(const std::string& name);

struct ForgerySample {
  /// 3 x H x W, values in [0, 1].
  Tensor image;
  /// 1 x H x W, values in {0, 1}.
  Tensor mask;
  ForgeryType type = ForgeryType::unknown;
  std::string id;
};

struct SkippedFile {
  std::filesystem::path path;
  std::string reason;
};

struct Corpus {
  std::vector<ForgerySample> samples;
  std::vector<SkippedFile> skipped;
};

/// Reads `<root>/images/<id>.<ext>` paired with `<root>/masks/<id>.png`.
/// Images are bilinearly resized to resolution x resolution, masks are
/// nearest-neighbour resized and binarised at 0.5. Unpaired files are
/// reported in `skipped`; unreadable files throw IoError. An optional
/// `<root>/types.csv` (id,type) supplies forgery types.
Corpus load_corpus(const std::filesystem::path& root, int resolution = 256);

struct LoadedImage {
  /// 3 x resolution x resolution, values in [0, 1].
  Tensor image;
  int original_height = 0;
  int original_width = 0;
};

/// Reads a colour image and bilinearly resizes it to resolution x resolution.
LoadedImage load_image(const std::filesystem::path& path, int resolution);
/// Reads a single-channel 8-bit image as an H x W map with values v / 255.
Tensor load_gray_map(const std::filesystem::path& path);
/// Writes a [1, H, W] or [H, W] map of values in [0, 1] as an 8-bit PNG (value x 255).
void write_gray_png(const std::filesystem::path& path, const Tensor& map);

/// Writes PNG image and mask files plus types.csv in the corpus layout.
void write_corpus(const std::filesystem::path& root, const std::vector<ForgerySample>& samples);

struct SynthOptions {
  double min_area = 0.02;
  double max_area = 0.30;
};

/// Provenance of a copy-move sample: a square patch at `src` is flipped
/// (horizontally, first) and rotated by quarter turns, then the pixels under
/// `footprint` are pasted at `dst`.
struct CopyMoveTrace {
  int patch = 0;
  int src_row = 0, src_col = 0;
  int dst_row = 0, dst_col = 0;
  int quarter_turns = 0;
  bool flip = false;
  /// patch x patch binary footprint in destination coordinates.
  Tensor footprint;
};

struct SpliceTrace {
  Tensor host;
  Tensor donor;
  int row = 0, col = 0;
  /// Binary footprint of the donor region, placed at (row, col).
  Tensor footprint;
};

struct SyntheticForgery {
  ForgerySample sample;
  std::variant<CopyMoveTrace, SpliceTrace> trace;
};

SyntheticForgery synth_copy_move(std::uint64_t seed, int size, const SynthOptions& opt = {});
SyntheticForgery synth_splice(std::uint64_t seed, int size, const SynthOptions& opt = {});

/// Source coordinates (within the patch) of destination patch pixel (r, c).
std::pair<int, int> copy_move_source(const CopyMoveTrace& t, int r, int c);

/// True iff the mask is exactly the pasted footprint and every pasted pixel
/// equals its transformed source pixel.
bool verify_copy_move(const ForgerySample& s, const CopyMoveTrace& t);
/// True iff the mask is exactly the donor footprint, masked pixels come from
/// the donor and all other pixels from the host.
bool verify_splice(const ForgerySample& s, const SpliceTrace& t);

enum class SynthKind { copy_move, splice, mixed };
SynthKind parse_synth_kind(const std::string& name);

/// `count` samples; under `mixed`, even indices are copy-move and odd ones splice.
std::vector<ForgerySample> generate_synthetic(int count, int size, SynthKind kind,
                                              std::uint64_t seed, const SynthOptions& opt = {});

struct FoldAssignment {
  int k = 5;
  std::uint64_t seed = 0;
  std::map<std::string, int> fold_of;

  std::vector<std::string> test_ids(int fold) const;
  std::vector<std::string> train_ids(int fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Seeded shuffle followed by round-robin assignment.
FoldAssignment kfold(const std::vector<std::string>& ids, int k, std::uint64_t seed);

}  // namespace m2s
