#pragma once

// Small dense ReLU network with adaptive-moment updates, sized for the
// index-learner workloads. Float precision, Eigen storage, deterministic
// seeded initialization.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "rmab/core.hpp"

namespace rmab {

using MatF = Eigen::MatrixXf;
using VecF = Eigen::VectorXf;

struct Mlp {
    std::vector<int> widths;       // input, hidden..., output
    std::vector<MatF> w;           // w[l]: widths[l+1] x widths[l]
    std::vector<VecF> b;

    Mlp() = default;

    Mlp(std::vector<int> layer_widths, std::uint64_t seed) : widths(std::move(layer_widths)) {
        if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
        Rng rng(seed);
        std::normal_distribution<float> normal(0.0f, 1.0f);
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const int fan_in = widths[l], fan_out = widths[l + 1];
            const float scale = std::sqrt(2.0f / static_cast<float>(fan_in));
            MatF wl(fan_out, fan_in);
            for (int i = 0; i < fan_out; ++i)
                for (int j = 0; j < fan_in; ++j) wl(i, j) = scale * normal(rng);
            w.push_back(std::move(wl));
            b.push_back(VecF::Zero(fan_out));
        }
    }

    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
    std::size_t num_layers() const { return w.size(); }

    // Activations per layer; acts[0] is the input, acts.back() the linear output.
    struct Cache {
        std::vector<MatF> acts;
    };

    MatF forward(const MatF& x, Cache* cache = nullptr) const {
        if (x.rows() != input_dim()) throw std::invalid_argument("Mlp::forward: input dimension mismatch");
        MatF a = x;
        if (cache) {
            cache->acts.clear();
            cache->acts.push_back(a);
        }
        for (std::size_t l = 0; l < w.size(); ++l) {
            MatF z = (w[l] * a).colwise() + b[l];
            if (l + 1 < w.size()) z = z.cwiseMax(0.0f);
            a = std::move(z);
            if (cache) cache->acts.push_back(a);
        }
        return a;
    }

    struct Grads {
        std::vector<MatF> w;
        std::vector<VecF> b;
    };

    // Backprop of dL/d(output) through the cached forward pass.
    Grads backward(const Cache& cache, const MatF& d_out) const {
        Grads g;
        g.w.resize(w.size());
        g.b.resize(w.size());
        MatF delta = d_out;
        for (std::size_t l = w.size(); l-- > 0;) {
            if (l + 1 < w.size()) {
                // ReLU mask of the stored post-activation.
                delta = delta.cwiseProduct((cache.acts[l + 1].array() > 0.0f).cast<float>().matrix());
            }
            g.w[l] = delta * cache.acts[l].transpose();
            g.b[l] = delta.rowwise().sum();
            if (l > 0) delta = w[l].transpose() * delta;
        }
        return g;
    }

    bool finite() const {
        for (const MatF& m : w)
            if (!m.allFinite()) return false;
        for (const VecF& v : b)
            if (!v.allFinite()) return false;
        return true;
    }
};

// Copies main parameters into target; shapes must agree.
inline void sync_target(const Mlp& main, Mlp& target) {
    if (main.widths != target.widths) throw std::invalid_argument("sync_target: shape mismatch");
    target.w = main.w;
    target.b = main.b;
}

struct Adam {
    float lr = 1e-5f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    long t = 0;
    std::vector<MatF> mw, vw;
    std::vector<VecF> mb, vb;

    void init(const Mlp& net) {
        t = 0;
        mw.clear(); vw.clear(); mb.clear(); vb.clear();
        for (const MatF& m : net.w) {
            mw.push_back(MatF::Zero(m.rows(), m.cols()));
            vw.push_back(MatF::Zero(m.rows(), m.cols()));
        }
        for (const VecF& v : net.b) {
            mb.push_back(VecF::Zero(v.size()));
            vb.push_back(VecF::Zero(v.size()));
        }
    }

    void step(Mlp& net, const Mlp::Grads& g) {
        ++t;
        const float c1 = 1.0f - std::pow(beta1, static_cast<float>(t));
        const float c2 = 1.0f - std::pow(beta2, static_cast<float>(t));
        for (std::size_t l = 0; l < net.w.size(); ++l) {
            mw[l] = beta1 * mw[l] + (1.0f - beta1) * g.w[l];
            vw[l] = beta2 * vw[l] + (1.0f - beta2) * g.w[l].cwiseProduct(g.w[l]);
            net.w[l].array() -= lr * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + eps);
            mb[l] = beta1 * mb[l] + (1.0f - beta1) * g.b[l];
            vb[l] = beta2 * vb[l] + (1.0f - beta2) * g.b[l].cwiseProduct(g.b[l]);
            net.b[l].array() -= lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + eps);
        }
    }
};

}  // namespace rmab
