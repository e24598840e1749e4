#pragma once

#include "semikan/common.hpp"

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace semikan {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense N-dimensional array of 64-bit floats in row-major order.
//
// A Tensor is a cheap shared handle. Values are written once by the op that
// produces them; only the grad buffer mutates afterwards. Setting
// requires_grad on a leaf makes every downstream result grad-tracked while a
// tape is active.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t rank() const { return int64_t(impl_->shape.size()); }
    int64_t numel() const { return int64_t(impl_->data.size()); }
    int64_t dim(int64_t i) const { return impl_->shape[size_t(i)]; }

    std::span<double> data() { return impl_->data; }
    std::span<const double> data() const { return impl_->data; }
    double* ptr() { return impl_->data.data(); }
    const double* ptr() const { return impl_->data.data(); }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<double> grad();                // allocates zeros on first use
    std::span<const double> grad() const;    // empty span if never populated
    void zero_grad();

    // grad += g (elementwise over numel values).
    void accumulate_grad(const double* g);

    // Value of a scalar tensor.
    double item() const;

    // Row-major element access for tests and small fixtures.
    double at(std::initializer_list<int64_t> idx) const;
    double& at_mut(std::initializer_list<int64_t> idx);

    // Identity of the underlying buffer (aliasing checks).
    const void* id() const { return impl_.get(); }

  private:
    struct Impl {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad; // empty until first accumulation
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;
};

// Records one backward rule per executed op, in execution order. Replaying
// the rules in reverse applies the chain rule exactly once per op, so two
// backward passes over the same tape produce bit-identical gradients.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(const Tensor& output, std::function<void()> backward_rule);

    // Seeds d(loss)/d(loss) = 1 and replays all rules in reverse order.
    // Recorded op outputs get fresh grad buffers per pass; leaf grads
    // accumulate across repeated calls.
    void backward(const Tensor& loss);

    size_t size() const { return rules_.size(); }
    void clear() { rules_.clear(); }

    static Tape* current();

  private:
    friend struct TapeScope;
    friend struct NoGradScope;
    std::vector<std::pair<Tensor, std::function<void()>>> rules_;
};

// Makes `tape` the recording target for the current thread.
struct TapeScope {
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    Tape* prev;
};

// Disables recording for the current thread (eval-mode forward).
struct NoGradScope {
    NoGradScope();
    ~NoGradScope();
    Tape* prev;
};

// True when `t` should be tracked: requires_grad and a live tape.
bool grad_enabled(const Tensor& t);

} // namespace semikan
