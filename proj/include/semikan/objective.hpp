#pragma once

#include "semikan/tensor.hpp"

#include <cstdint>
#include <vector>

namespace semikan {

class SemiKanModel;

struct ObjectiveConfig {
    double temperature = 0.5; // sharpening T
    double alpha = 0.5;       // weighting between uncertainty and rectified terms
    double lambda_max = 1.0;  // consistency ramp ceiling
    double ramp_fraction = 0.25; // t_r as a fraction of total steps
};

// Per-step loss values for the training log.
struct LossReport {
    double dice_loss = 0.0;
    double uncertainty_loss = 0.0;
    double rectify_loss = 0.0;
    double consistency_loss = 0.0;
    double total_loss = 0.0;
    double ramp_weight = 0.0; // lambda(t)
};

// Temperature sharpening over the class axis:
//   p'_k = p_k^(1/T) / sum_j p_j^(1/T).
// T == 1 leaves the distribution unchanged. For two classes this reduces to
// the binary form p^(1/T) / (p^(1/T) + (1-p)^(1/T)).
Tensor sharpen(const Tensor& probs, double temperature, int64_t class_axis);

// Arithmetic mean of the sharpened decoder outputs. The result is detached:
// it serves as a fixed target for the consistency terms.
Tensor pseudo_annotation(const std::vector<Tensor>& sharpened);

// Per-pixel KL divergence of each decoder output from the pseudo-annotation
// plus its per-decoder total (the raw sum over all pixels).
struct UncertaintyEstimate {
    std::vector<Tensor> per_pixel; // one [N,H,W] map per decoder
    std::vector<double> per_decoder_total;
};
UncertaintyEstimate uncertainty(const std::vector<Tensor>& sharpened, const Tensor& pseudo,
                                int64_t class_axis);

// Consistency objective (differentiable scalar parts):
//   uncertainty term: mean over decoders of the pixel-mean KL
//   rectified term:   mean over decoders of sum(||p'-p_avg||_2 * w) / sum(w),
//                     w = exp(-U_pixel)
//   consistency  = alpha * uncertainty + (1 - alpha) * rectified.
struct ConsistencyParts {
    Tensor uncertainty_term;
    Tensor rectify_term;
    Tensor consistency;
};
ConsistencyParts consistency_loss(const std::vector<Tensor>& sharpened, const Tensor& pseudo,
                                  const std::vector<Tensor>& u_pixel, double alpha,
                                  int64_t class_axis);

// Soft multi-class Dice loss with smoothing 1e-5. `target` holds class
// indices [N,H,W] and is treated as a constant.
Tensor dice_loss(const Tensor& logits, const Tensor& target);

// Consistency ramp lambda(t) = lambda_max * exp(-5 (1 - min(t,t_r)/t_r)^2).
double ramp_weight(int64_t step, int64_t ramp_steps, double lambda_max);

// Full training objective for one step:
//   mean over decoders of dice(labeled) + lambda(t) * consistency(unlabeled).
// `unlabeled` may be undefined (pure supervised step). Returns the scalar
// loss tensor; `report` receives the logged values.
Tensor total_loss(SemiKanModel& model, const Tensor& labeled_images, const Tensor& labeled_masks,
                  const Tensor& unlabeled_images, int64_t step, int64_t ramp_steps,
                  const ObjectiveConfig& cfg, LossReport& report);

} // namespace semikan
