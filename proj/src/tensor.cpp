#include "spgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spgan {

namespace {
thread_local Tape* g_active_tape = nullptr;
bool g_anomaly_detection = false;
}  // namespace

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ConfigError("non-positive dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void set_anomaly_detection(bool enabled) { g_anomaly_detection = enabled; }
bool anomaly_detection() { return g_anomaly_detection; }

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : impl_(std::make_shared<TensorImpl<T>>()) {
    const int64_t n = shape_numel(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<size_t>(n), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : impl_(std::make_shared<TensorImpl<T>>()) {
    const int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(data.size())) {
        throw ConfigError("tensor shape " + shape_str(shape) + " does not match " +
                          std::to_string(data.size()) + " values");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

template <typename T>
int64_t BasicTensor<T>::dim(int axis) const {
    const int n = ndim();
    if (axis < 0) axis += n;
    if (axis < 0 || axis >= n) throw ConfigError("axis out of range for shape " + shape_str(shape()));
    return impl_->shape[static_cast<size_t>(axis)];
}

template <typename T>
T BasicTensor<T>::item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

template <typename T>
std::span<T> BasicTensor<T>::grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
    if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool value) {
    impl_->requires_grad = value;
    return *this;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
    return BasicTensor(impl_->shape, impl_->data);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
    BasicTensor out(impl_->shape, impl_->data);
    out.impl_->requires_grad = impl_->requires_grad;
    return out;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::view_as(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw ConfigError("cannot view " + shape_str(this->shape()) + " as " + shape_str(shape));
    }
    BasicTensor out;
    out.impl_ = std::make_shared<TensorImpl<T>>();
    out.impl_->shape = std::move(shape);
    out.impl_->data = impl_->data;
    return out;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

int64_t Tape::record(BackwardFn fn) {
    records_.push_back(std::move(fn));
    return static_cast<int64_t>(records_.size()) - 1;
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape::Pause::Pause() : previous_(g_active_tape) { g_active_tape = nullptr; }
Tape::Pause::~Pause() { g_active_tape = previous_; }

template <typename T>
void Tape::backward(const BasicTensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw UsageError("backward() needs a scalar loss, got shape " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    auto seed = const_cast<BasicTensor<T>&>(loss).grad();
    seed[0] = T(1);
    const int64_t start = loss.node_id();
    if (start >= static_cast<int64_t>(records_.size())) {
        throw UsageError("loss was not recorded on this tape");
    }
    for (int64_t i = start; i >= 0; --i) records_[static_cast<size_t>(i)]();
}

template void Tape::backward<float>(const BasicTensor<float>&);
template void Tape::backward<double>(const BasicTensor<double>&);

template <typename T>
void backward(const BasicTensor<T>& loss) {
    Tape* tape = Tape::active();
    if (!tape) throw UsageError("backward() called with no active tape");
    tape->backward(loss);
}

template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);

namespace detail {

template <typename T>
void check_finite(const BasicTensor<T>& t, const char* op) {
    for (T v : t.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite output from ") + op);
    }
}

template void check_finite<float>(const BasicTensor<float>&, const char*);
template void check_finite<double>(const BasicTensor<double>&, const char*);

}  // namespace detail

}  // namespace spgan
