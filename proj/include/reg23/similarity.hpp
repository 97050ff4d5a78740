#pragma once

#include <string>
#include <vector>

#include "reg23/image.hpp"
#include "reg23/pose.hpp"

namespace reg23 {

enum class MetricKind { NCC, LocalNCC, GradCorr, NGI, GradDiff, MSE };

/// Metric selector; LocalNCC carries its patch size.
struct MetricSpec {
  MetricKind kind = MetricKind::GradCorr;
  int patch = 16;
};

/// True for similarity scores (higher is better), false for losses.
bool metric_maximizes(MetricKind kind);

// CLI names: ncc | nccl | gc | ngi | gd | mse
MetricKind parse_metric(const std::string& name);
std::string metric_name(MetricKind kind);

/// Pearson correlation over all pixels, in [-1, 1]. Exactly 1 (or -1) for
/// identical (or negated) inputs. Throws DegenerateInput on zero variance.
double ncc(const Image& a, const Image& b);

/// Mean per-patch NCC over a non-overlapping patch grid; zero-variance
/// patches are skipped. `patch` must divide both dims.
double local_ncc(const Image& a, const Image& b, int patch);

/// Mean of the NCCs of the central-difference gradient images.
double grad_corr(const Image& a, const Image& b);

/// Gradient information of (a, b) normalized by the self-information of b.
double ngi(const Image& a, const Image& b);

/// Gradient difference loss in [0, 1]; 0 iff the gradient images agree.
/// The first argument is the fixed image whose gradient variance scales
/// the penalty.
double grad_diff(const Image& fixed, const Image& moving);

/// Mean over the batch of the L2 norm of the six-parameter difference
/// (degrees and mm mixed as raw numbers); `squared` switches to the
/// squared-norm variant.
double mse_params(const Pose& target, const std::vector<Pose>& preds,
                  bool squared = false);

/// Dispatches an image metric by spec (MSE is pose-space and not valid here).
double evaluate_metric(const MetricSpec& spec, const Image& a, const Image& b);

}  // namespace reg23
