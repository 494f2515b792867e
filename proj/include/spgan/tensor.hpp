#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spgan/error.hpp"

namespace spgan {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Debug mode: every recorded op checks its output for NaN/Inf and throws NumericError.
void set_anomaly_detection(bool enabled);
bool anomaly_detection();

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    int64_t node_id = -1;
};

// Dense row-major array with shared ownership. Copies are handles to the same storage;
// use clone() for a deep copy.
template <typename T>
class BasicTensor {
   public:
    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T(0));
    BasicTensor(Shape shape, std::vector<T> data);

    static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), T(0)); }
    static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, value); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t dim(int axis) const;
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    std::span<T> data() { return impl_->data; }
    std::span<const T> data() const { return impl_->data; }
    std::vector<T>& storage() { return impl_->data; }
    const std::vector<T>& storage() const { return impl_->data; }
    T item() const;

    // Gradient buffer, allocated as zeros of matching shape on first access. Writable through
    // a const handle: the gradient is accumulator state, not part of the tensor's value.
    std::span<T> grad() const;
    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    void zero_grad();

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    BasicTensor& set_requires_grad(bool value);
    int64_t node_id() const { return impl_ ? impl_->node_id : -1; }
    void set_node_id(int64_t id) { impl_->node_id = id; }

    // Same values, no graph history, independent storage.
    BasicTensor detach() const;
    BasicTensor clone() const;
    // Reinterpret the storage under a new shape without recording anything.
    BasicTensor view_as(Shape shape) const;

    bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

   private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;

// Ordered record of differentiable operations. Backward walks records in reverse, so
// every operation's inputs were necessarily recorded (or are leaves) before it.
class Tape {
   public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int64_t record(BackwardFn fn);
    size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

    template <typename T>
    void backward(const BasicTensor<T>& loss);

    // Tape ops are recorded onto; nullptr means recording is off.
    static Tape* active();

    class Scope {
       public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

       private:
        Tape* previous_;
    };

    // Disables recording for its lifetime.
    class Pause {
       public:
        Pause();
        ~Pause();
        Pause(const Pause&) = delete;
        Pause& operator=(const Pause&) = delete;

       private:
        Tape* previous_;
    };

   private:
    std::vector<BackwardFn> records_;
};

// Backpropagates a scalar loss through the active tape.
template <typename T>
void backward(const BasicTensor<T>& loss);

namespace detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const BasicTensor<T>*> inputs) {
    for (const auto* t : inputs) {
        if (t && t->defined() && t->requires_grad()) return true;
    }
    return false;
}

template <typename T>
void check_finite(const BasicTensor<T>& t, const char* op);

// Marks `out` as a tape node when recording and any input needs a gradient.
// Returns false when nothing was recorded.
template <typename T>
bool record(BasicTensor<T>& out, std::initializer_list<const BasicTensor<T>*> inputs,
            Tape::BackwardFn fn, const char* op) {
    if (anomaly_detection()) check_finite(out, op);
    Tape* tape = Tape::active();
    if (!tape || !any_requires_grad<T>(inputs)) return false;
    out.set_requires_grad(true);
    out.set_node_id(tape->record(std::move(fn)));
    return true;
}

}  // namespace detail

}  // namespace spgan
