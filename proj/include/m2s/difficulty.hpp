#pragma once

// Edge-aware difficulty scoring of the stride-32 global prior map: Sobel
// derivative stack, level-set curvature, edge-weighted mean curvature through
// a sigmoid, and the hard/easy verdict.

#include <optional>
#include <string>
#include <string_view>

#include "m2s/tensor.hpp"

namespace m2s {

enum class CurvatureMode {
  /// Numerator term -2 Gx Gy, without the cross derivative.
  as_written,
  /// Textbook level-set numerator with -2 Gx Gy Gxy.
  standard,
};

enum class DifficultyLabel { easy, hard };

std::string_view label_name(DifficultyLabel label) noexcept;
std::optional<DifficultyLabel> parse_label(std::string_view name) noexcept;
std::string curvature_mode_name(CurvatureMode mode);
CurvatureMode parse_curvature_mode(const std::string& name);

struct DifficultyConfig {
  double threshold = 0.5;
  CurvatureMode mode = CurvatureMode::as_written;
  double epsilon = 1e-8;

  void validate() const;
  friend bool operator==(const DifficultyConfig&, const DifficultyConfig&) = default;
};

/// 2-D maps are rank-2 [H, W] tensors; [1, H, W] inputs are accepted and
/// flattened.
struct SobelPair {
  Tensor dx;
  Tensor dy;
};

/// Correlation with the 3x3 Sobel pair, replicate-padded borders. Throws
/// DimensionError for maps smaller than 3x3.
SobelPair sobel(const Tensor& map);

struct DerivativeStack {
  Tensor gx, gy, gxx, gxy, gyx, gyy;
};

DerivativeStack derivative_stack(const Tensor& prior);

struct CurvatureField {
  Tensor kappa;
  Tensor edge;
};

Tensor curvature(const DerivativeStack& stack, CurvatureMode mode, double eps = 1e-8);
/// sqrt(Gx^2 + Gy^2)
Tensor edge_magnitude(const DerivativeStack& stack);

/// sigmoid(sum(kappa * E) / sum(E)), or exactly 0 when sum(E) < eps.
double difficulty_score(const CurvatureField& field, double eps = 1e-8);

struct DifficultyVerdict {
  double score = 0.0;
  DifficultyLabel label = DifficultyLabel::easy;
  double threshold = 0.5;
};

/// hard iff score >= threshold.
DifficultyVerdict classify(double score, double threshold);

/// Full pipeline on a prior map. Maps smaller than 3x3 carry no measurable
/// edge structure and take the zero-edge verdict (score 0).
DifficultyVerdict assess_difficulty(const Tensor& prior, const DifficultyConfig& cfg = {});

}  // namespace m2s
