#include "hafuse/tape.hpp"

#include <cmath>
#include <string>

namespace hafuse::ag {

template <typename S>
TensorRef<S> Tape<S>::emit(const char* op, Shape shape, std::vector<S> data,
                           std::vector<int32_t> inputs, BackFn back) {
    if (static_cast<int64_t>(data.size()) != shape.count())
        throw ContractError(std::string(op) + ": op produced wrong element count");
    if (check_finite) {
        for (S v : data) {
            if (!std::isfinite(static_cast<double>(v)))
                throw NumericError(std::string(op) + ": non-finite value in output");
        }
    }
    TensorRec<S> rec;
    rec.shape = shape;
    rec.data = std::move(data);
    tensors_.push_back(std::move(rec));
    int32_t out = static_cast<int32_t>(tensors_.size() - 1);
    producer_.push_back(static_cast<int32_t>(nodes_.size()));
    nodes_.push_back(Node{out, std::move(inputs), std::move(back), op});
    return TensorRef<S>(this, out);
}

template <typename S>
void Tape<S>::backward(TensorRef<S> root) {
    if (!root.valid() || root.tape() != this)
        throw ContractError("backward: root does not belong to this tape");
    if (!is_scalar(rec(root.id()).shape))
        throw ContractError("backward: root must have shape (1,1,1,1), got " +
                            to_string(rec(root.id()).shape));

    // Restrict the reverse walk to the root's ancestry so that unrelated
    // branches (e.g. logging-only forwards) cost nothing.
    std::vector<char> needed(tensors_.size(), 0);
    std::vector<int32_t> stack{root.id()};
    needed[static_cast<size_t>(root.id())] = 1;
    while (!stack.empty()) {
        int32_t id = stack.back();
        stack.pop_back();
        int32_t prod = producer_[static_cast<size_t>(id)];
        if (prod < 0) continue;
        for (int32_t in : nodes_[static_cast<size_t>(prod)].ins) {
            if (!needed[static_cast<size_t>(in)]) {
                needed[static_cast<size_t>(in)] = 1;
                stack.push_back(in);
            }
        }
    }

    // Each call must contribute exactly one dRoot/dX to every grad buffer.
    // The walk itself needs clean buffers (back rules read the out buffer of
    // later nodes), so grads left by earlier calls are set aside and merged
    // back afterwards.
    std::vector<std::pair<int32_t, std::vector<S>>> prior;
    for (size_t id = 0; id < tensors_.size(); ++id) {
        if (needed[id] && !tensors_[id].grad.empty()) {
            prior.emplace_back(static_cast<int32_t>(id), std::move(tensors_[id].grad));
            tensors_[id].grad.clear();
        }
    }

    grad_buf(root.id())[0] = S(1);

    for (size_t ni = nodes_.size(); ni-- > 0;) {
        Node& node = nodes_[ni];
        if (!needed[static_cast<size_t>(node.out)]) continue;
        grad_buf(node.out); // ensure the out grad exists even if all-zero
        for (int32_t in : node.ins) grad_buf(in);
        node.back(*this, node.out);
    }

    for (auto& [id, g] : prior) {
        auto& cur = grad_buf(id);
        for (size_t i = 0; i < g.size(); ++i) cur[i] += g[i];
    }
}

template class Tape<float>;
template class Tape<double>;

} // namespace hafuse::ag
