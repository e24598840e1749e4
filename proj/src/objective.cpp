#include "semikan/objective.hpp"

#include "semikan/model.hpp"
#include "semikan/ops.hpp"

#include <cmath>

namespace semikan {

Tensor sharpen(const Tensor& probs, double temperature, int64_t class_axis) {
    if (temperature <= 0.0)
        throw ConfigError("sharpen: temperature must be positive, got " +
                          std::to_string(temperature));
    Tensor powered = pow_scalar(probs, 1.0 / temperature);
    Tensor z = sum_axes(powered, {class_axis}, true);
    return powered / z;
}

Tensor pseudo_annotation(const std::vector<Tensor>& sharpened) {
    if (sharpened.size() < 2)
        throw ContractError("pseudo_annotation: needs at least 2 decoder outputs");
    Tensor acc = Tensor::zeros(sharpened[0].shape());
    double* pa = acc.ptr();
    for (const Tensor& p : sharpened) {
        if (p.shape() != sharpened[0].shape())
            throw DimensionError("pseudo_annotation: decoder output shapes differ");
        const double* ps = p.ptr();
        for (int64_t i = 0; i < acc.numel(); ++i) pa[i] += ps[i];
    }
    double inv = 1.0 / double(sharpened.size());
    for (double& v : acc.data()) v *= inv;
    return acc; // built outside the tape: already a constant target
}

UncertaintyEstimate uncertainty(const std::vector<Tensor>& sharpened, const Tensor& pseudo,
                                int64_t class_axis) {
    UncertaintyEstimate est;
    est.per_pixel.reserve(sharpened.size());
    for (const Tensor& p : sharpened) {
        Tensor u = kl_divergence_axis(p, pseudo, class_axis);
        double total = 0.0;
        for (double v : u.data()) total += v;
        est.per_pixel.push_back(u);
        est.per_decoder_total.push_back(total);
    }
    return est;
}

ConsistencyParts consistency_loss(const std::vector<Tensor>& sharpened, const Tensor& pseudo,
                                  const std::vector<Tensor>& u_pixel, double alpha,
                                  int64_t class_axis) {
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("consistency_loss: alpha must lie in [0,1]");
    if (sharpened.size() != u_pixel.size())
        throw ContractError("consistency_loss: decoder count mismatch");
    size_t B = sharpened.size();
    double invB = 1.0 / double(B);

    ConsistencyParts parts;
    Tensor unc_acc, rect_acc;
    for (size_t b = 0; b < B; ++b) {
        // Pixel-mean KL keeps the term resolution-independent.
        Tensor u_mean = mean(u_pixel[b]);
        unc_acc = unc_acc.defined() ? unc_acc + u_mean : u_mean;

        Tensor diff_norm = l2_norm_axis(sharpened[b] - pseudo, class_axis); // [N,H,W]
        Tensor w = exp(neg(u_pixel[b]));
        Tensor rect_b = sum(diff_norm * w) / sum(w);
        rect_acc = rect_acc.defined() ? rect_acc + rect_b : rect_b;
    }
    parts.uncertainty_term = unc_acc * invB;
    parts.rectify_term = rect_acc * invB;
    parts.consistency =
        parts.uncertainty_term * alpha + parts.rectify_term * (1.0 - alpha);
    return parts;
}

Tensor dice_loss(const Tensor& logits, const Tensor& target) {
    if (logits.rank() != 4) throw DimensionError("dice_loss: logits must be [N,K,H,W]");
    int64_t N = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    if (target.rank() != 3 || target.dim(0) != N || target.dim(1) != H || target.dim(2) != W)
        throw DimensionError("dice_loss: target " + shape_str(target.shape()) +
                             " does not match logits " + shape_str(logits.shape()));
    const double smooth = 1e-5;

    // One-hot constant [N,K,H,W].
    Tensor one_hot = Tensor::zeros(logits.shape());
    {
        const double* pt = target.ptr();
        double* po = one_hot.ptr();
        int64_t plane = H * W;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t i = 0; i < plane; ++i) {
                int64_t cls = int64_t(pt[n * plane + i]);
                if (cls < 0 || cls >= K)
                    throw ContractError("dice_loss: target class " + std::to_string(cls) +
                                        " out of range for K = " + std::to_string(K));
                po[(n * K + cls) * plane + i] = 1.0;
            }
    }
    Tensor p = softmax(logits, 1);
    std::vector<int64_t> reduce_axes{0, 2, 3};
    Tensor inter = sum_axes(p * one_hot, reduce_axes, false); // [K]
    Tensor psum = sum_axes(p, reduce_axes, false);
    Tensor ysum = sum_axes(one_hot, reduce_axes, false);
    Tensor dice = ((inter * 2.0) + smooth) / (psum + ysum + smooth);
    return neg(mean(dice)) + 1.0;
}

double ramp_weight(int64_t step, int64_t ramp_steps, double lambda_max) {
    if (ramp_steps <= 0 || step >= ramp_steps) return lambda_max;
    double frac = double(step) / double(ramp_steps);
    double gap = 1.0 - frac;
    return lambda_max * std::exp(-5.0 * gap * gap);
}

Tensor total_loss(SemiKanModel& model, const Tensor& labeled_images, const Tensor& labeled_masks,
                  const Tensor& unlabeled_images, int64_t step, int64_t ramp_steps,
                  const ObjectiveConfig& cfg, LossReport& report) {
    if (!labeled_images.defined() || labeled_images.dim(0) < 1)
        throw ContractError("total_loss: every step needs at least one labeled sample");

    std::vector<Tensor> logits = model.forward(labeled_images, true);
    Tensor dice_acc;
    for (const Tensor& lg : logits) {
        Tensor d = dice_loss(lg, labeled_masks);
        dice_acc = dice_acc.defined() ? dice_acc + d : d;
    }
    Tensor dice = dice_acc * (1.0 / double(logits.size()));
    report.dice_loss = dice.item();

    double lambda = ramp_weight(step, ramp_steps, cfg.lambda_max);
    report.ramp_weight = lambda;

    Tensor total = dice;
    if (unlabeled_images.defined() && lambda > 0.0) {
        std::vector<Tensor> u_logits = model.forward(unlabeled_images, true);
        std::vector<Tensor> sharpened;
        sharpened.reserve(u_logits.size());
        for (const Tensor& lg : u_logits)
            sharpened.push_back(sharpen(softmax(lg, 1), cfg.temperature, 1));
        Tensor pseudo = pseudo_annotation(sharpened);
        UncertaintyEstimate est = uncertainty(sharpened, pseudo, 1);
        ConsistencyParts parts = consistency_loss(sharpened, pseudo, est.per_pixel, cfg.alpha, 1);
        report.uncertainty_loss = parts.uncertainty_term.item();
        report.rectify_loss = parts.rectify_term.item();
        report.consistency_loss = parts.consistency.item();
        total = total + parts.consistency * lambda;
    } else {
        report.uncertainty_loss = 0.0;
        report.rectify_loss = 0.0;
        report.consistency_loss = 0.0;
    }
    report.total_loss = total.item();
    return total;
}

} // namespace semikan
