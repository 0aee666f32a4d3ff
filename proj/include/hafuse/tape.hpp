#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hafuse/array.hpp"
#include "hafuse/errors.hpp"

namespace hafuse::ag {

// Reverse-mode autodiff over rank-4 tensors.
//
// The scalar type is the precision mode: float is the training mode, double
// the verification mode used by finite-difference checks. A tape is built in
// exactly one mode, so mixed-precision graphs cannot be expressed.
//
// The tape owns every tensor record; user code holds cheap (tape, id)
// handles. Ops append nodes in topological order; backward() walks the nodes
// in reverse, restricted to the ancestry of the root, and accumulates into
// persistent grad buffers (calling backward twice doubles the grads).

template <typename S> class Tape;

template <typename S>
struct TensorRec {
    Shape shape;
    std::vector<S> data;   // immutable once the producing op wrote it
    bool requires_grad = false;
    std::vector<S> grad;   // empty until backward touches this tensor
};

template <typename S>
class TensorRef {
public:
    TensorRef() = default;

    bool valid() const { return tape_ != nullptr; }
    Tape<S>* tape() const { return tape_; }
    int32_t id() const { return id_; }

    const Shape& shape() const;
    const std::vector<S>& value() const;
    // Gradient of the last backward root w.r.t. this tensor; empty if
    // backward never reached it.
    const std::vector<S>& grad() const;
    Array<S> to_array() const;

private:
    friend class Tape<S>;
    TensorRef(Tape<S>* t, int32_t id) : tape_(t), id_(id) {}
    Tape<S>* tape_ = nullptr;
    int32_t id_ = -1;
};

template <typename S>
class Tape {
public:
    // When set (default), every op forward scans its output for NaN/Inf and
    // raises NumericError naming the op.
    bool check_finite = true;

    TensorRef<S> leaf(const Array<S>& value, bool requires_grad = false) {
        return leaf(value.shape, value.data, requires_grad);
    }
    TensorRef<S> leaf(const Shape& shape, std::vector<S> data, bool requires_grad = false) {
        if (static_cast<int64_t>(data.size()) != shape.count())
            throw DimensionError("leaf: data size does not match shape " + to_string(shape));
        TensorRec<S> rec;
        rec.shape = shape;
        rec.data = std::move(data);
        rec.requires_grad = requires_grad;
        tensors_.push_back(std::move(rec));
        producer_.push_back(-1);
        return TensorRef<S>(this, static_cast<int32_t>(tensors_.size() - 1));
    }

    void backward(TensorRef<S> root);

    size_t tensor_count() const { return tensors_.size(); }
    size_t node_count() const { return nodes_.size(); }

    TensorRec<S>& rec(int32_t id) { return tensors_[static_cast<size_t>(id)]; }
    const TensorRec<S>& rec(int32_t id) const { return tensors_[static_cast<size_t>(id)]; }

    // Grad buffer of a tensor, created zero-filled on first use.
    std::vector<S>& grad_buf(int32_t id) {
        auto& r = rec(id);
        if (r.grad.empty()) r.grad.assign(r.data.size(), S(0));
        return r.grad;
    }

    // Appends an op result plus its backward rule (invoked later with this
    // tape and the result's id). Ops call this; user code should not need to.
    using BackFn = std::function<void(Tape<S>&, int32_t out)>;
    TensorRef<S> emit(const char* op, Shape shape, std::vector<S> data,
                      std::vector<int32_t> inputs, BackFn back);

private:
    struct Node {
        int32_t out;
        std::vector<int32_t> ins;
        BackFn back;
        const char* op;
    };
    std::vector<TensorRec<S>> tensors_;
    std::vector<Node> nodes_;
    std::vector<int32_t> producer_; // tensor id -> producing node index, -1 for leaves
};

template <typename S>
const Shape& TensorRef<S>::shape() const { return tape_->rec(id_).shape; }
template <typename S>
const std::vector<S>& TensorRef<S>::value() const { return tape_->rec(id_).data; }
template <typename S>
const std::vector<S>& TensorRef<S>::grad() const { return tape_->rec(id_).grad; }
template <typename S>
Array<S> TensorRef<S>::to_array() const {
    return Array<S>(shape(), value());
}

} // namespace hafuse::ag
