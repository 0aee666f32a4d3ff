#pragma once

#include <cmath>
#include <limits>

#include "hafuse/ops.hpp"

namespace hafuse::nn {

struct LossWeights {
    double alpha = 100.0; // weights the basic (content) loss inside the generator loss
    double beta = 5.0;    // weights the infrared term inside the basic loss
    double gamma = 5.0;   // weights the salient term inside the discriminator loss
    void validate() const {
        if (!(alpha > 0) || !(beta > 0) || !(gamma > 0))
            throw ParameterError("loss weights must be strictly positive");
    }
};

// Per-step scalar snapshot for logging. Terms that do not exist in the active
// adversary combination stay NaN.
struct LossBreakdown {
    double l_g = std::numeric_limits<double>::quiet_NaN();
    double l_adver = std::numeric_limits<double>::quiet_NaN();
    double l_basic = std::numeric_limits<double>::quiet_NaN();
    double l_infrared = std::numeric_limits<double>::quiet_NaN();
    double l_visible = std::numeric_limits<double>::quiet_NaN();
    double l_d = std::numeric_limits<double>::quiet_NaN();
    double l_ds = std::numeric_limits<double>::quiet_NaN();
    double l_dd = std::numeric_limits<double>::quiet_NaN();
};

// Mean squared intensity difference against the infrared image.
template <typename S>
ag::TensorRef<S> loss_infrared(ag::TensorRef<S> fused, ag::TensorRef<S> ir) {
    auto d = ag::sub(fused, ir);
    return ag::mean(ag::mul(d, d));
}

// Mean absolute difference of Sobel gradient magnitudes against the visible
// image; invariant to constant intensity offsets by construction.
template <typename S>
ag::TensorRef<S> loss_visible(ag::TensorRef<S> fused, ag::TensorRef<S> vi) {
    return ag::mean(ag::abs_val(ag::sub(ag::sobel_gradient(fused), ag::sobel_gradient(vi))));
}

// Least-squares pull of a probability batch toward the real label 1.
template <typename S>
ag::TensorRef<S> toward_real(ag::TensorRef<S> p) {
    auto d = ag::add_const(p, -1.0);
    return ag::mean(ag::mul(d, d));
}

// Least-squares discriminator objective with labels 1 (real) and 0 (fake).
// Shared by the salient and detailed adversaries.
template <typename S>
ag::TensorRef<S> discriminator_loss(ag::TensorRef<S> p_real, ag::TensorRef<S> p_fake) {
    auto dr = ag::add_const(p_real, -1.0);
    auto real_term = ag::scale(ag::mean(ag::mul(dr, dr)), 0.5);
    auto fake_term = ag::scale(ag::mean(ag::mul(p_fake, p_fake)), 0.5);
    return ag::add(real_term, fake_term);
}

template <typename S>
struct GeneratorLossGraph {
    ag::TensorRef<S> total, adver, basic, infrared, visible;
};

// L_G = L_adver + alpha * (L_visible + beta * L_infrared). Either probability
// may be an invalid ref when that adversary is absent; at least one must be
// present.
template <typename S>
GeneratorLossGraph<S> total_G(ag::TensorRef<S> fused, ag::TensorRef<S> ir, ag::TensorRef<S> vi,
                              ag::TensorRef<S> p_salient, ag::TensorRef<S> p_detailed,
                              const LossWeights& w) {
    w.validate();
    GeneratorLossGraph<S> g;
    g.infrared = loss_infrared(fused, ir);
    g.visible = loss_visible(fused, vi);
    g.basic = ag::add(g.visible, ag::scale(g.infrared, w.beta));
    if (p_salient.valid() && p_detailed.valid())
        g.adver = ag::add(toward_real(p_salient), toward_real(p_detailed));
    else if (p_salient.valid())
        g.adver = toward_real(p_salient);
    else if (p_detailed.valid())
        g.adver = toward_real(p_detailed);
    else
        throw ContractError("total_G: at least one adversary probability is required");
    g.total = ag::add(g.adver, ag::scale(g.basic, w.alpha));
    return g;
}

template <typename S>
struct DiscriminatorLossGraph {
    ag::TensorRef<S> total, salient, detailed; // salient/detailed may be invalid
};

// L_D = L_DD + gamma * L_DS, assembled from whichever sides exist.
template <typename S>
DiscriminatorLossGraph<S> total_D(ag::TensorRef<S> p_s_real, ag::TensorRef<S> p_s_fake,
                                  ag::TensorRef<S> p_d_real, ag::TensorRef<S> p_d_fake,
                                  const LossWeights& w) {
    w.validate();
    DiscriminatorLossGraph<S> g;
    if (p_s_real.valid()) g.salient = discriminator_loss(p_s_real, p_s_fake);
    if (p_d_real.valid()) g.detailed = discriminator_loss(p_d_real, p_d_fake);
    if (g.salient.valid() && g.detailed.valid())
        g.total = ag::add(g.detailed, ag::scale(g.salient, w.gamma));
    else if (g.salient.valid())
        g.total = ag::scale(g.salient, w.gamma);
    else if (g.detailed.valid())
        g.total = g.detailed;
    else
        throw ContractError("total_D: at least one adversary side is required");
    return g;
}

template <typename S>
double scalar_value(ag::TensorRef<S> ref) {
    if (!ref.valid()) return std::numeric_limits<double>::quiet_NaN();
    if (!is_scalar(ref.shape())) throw ContractError("scalar_value: tensor is not scalar");
    return static_cast<double>(ref.value()[0]);
}

} // namespace hafuse::nn
