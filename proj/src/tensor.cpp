#include "semikan/tensor.hpp"

#include <utility>

namespace semikan {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, bool requires_grad) {
    for (int64_t d : shape)
        if (d <= 0) throw DimensionError("Tensor: non-positive dim in shape " + shape_str(shape));
    impl_ = std::make_shared<Impl>();
    impl_->shape = std::move(shape);
    impl_->data.assign(size_t(shape_numel(impl_->shape)), 0.0);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return Tensor(std::move(shape), requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    for (double& v : t.data()) v = value;
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    Tensor t;
    for (int64_t d : shape)
        if (d <= 0) throw DimensionError("Tensor: non-positive dim in shape " + shape_str(shape));
    if (shape_numel(shape) != int64_t(data.size()))
        throw DimensionError("Tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

std::span<double> Tensor::grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

std::span<const double> Tensor::grad() const {
    return impl_->grad;
}

void Tensor::zero_grad() {
    for (double& g : impl_->grad) g = 0.0;
}

void Tensor::accumulate_grad(const double* g) {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    double* dst = impl_->grad.data();
    size_t n = impl_->data.size();
    for (size_t i = 0; i < n; ++i) dst[i] += g[i];
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("Tensor::item: tensor has " + std::to_string(numel()) + " elements");
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
    return const_cast<Tensor*>(this)->at_mut(idx);
}

double& Tensor::at_mut(std::initializer_list<int64_t> idx) {
    if (int64_t(idx.size()) != rank())
        throw DimensionError("Tensor::at: index rank mismatch");
    int64_t off = 0;
    size_t k = 0;
    for (int64_t i : idx) {
        off = off * impl_->shape[k] + i;
        ++k;
    }
    return impl_->data[size_t(off)];
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_current_tape = nullptr;
} // namespace

Tape* Tape::current() { return g_current_tape; }

void Tape::record(const Tensor& output, std::function<void()> backward_rule) {
    rules_.emplace_back(output, std::move(backward_rule));
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    // Fresh pass for intermediates; leaves keep accumulating.
    for (auto& [out, rule] : rules_) out.zero_grad();
    const_cast<Tensor&>(loss).grad()[0] += 1.0;
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) it->second();
}

TapeScope::TapeScope(Tape& tape) : prev(g_current_tape) { g_current_tape = &tape; }
TapeScope::~TapeScope() { g_current_tape = prev; }

NoGradScope::NoGradScope() : prev(g_current_tape) { g_current_tape = nullptr; }
NoGradScope::~NoGradScope() { g_current_tape = prev; }

bool grad_enabled(const Tensor& t) {
    return t.requires_grad() && g_current_tape != nullptr;
}

} // namespace semikan
