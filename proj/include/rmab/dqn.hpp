#pragma once

// Approximate Lagrangian-index learner: feed-forward Q approximator,
// experience replay, periodically synchronized target net, and the same
// slow dual update as the tabular learners.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rmab/core.hpp"
#include "rmab/exact.hpp"
#include "rmab/nn.hpp"
#include "rmab/tabular.hpp"

namespace rmab {

struct Transition {
    int type = 0;
    int state = 0;
    int action = 0;
    int next_state = 0;
    float reward = 0.0f;
    float lambda = 0.0f;
};

struct ReplayBuffer {
    std::size_t capacity = 1000;
    std::vector<Transition> data;
    std::size_t cursor = 0;  // next eviction slot once full

    explicit ReplayBuffer(std::size_t cap = 1000) : capacity(cap) { data.reserve(cap); }

    std::size_t size() const { return data.size(); }

    void push(const Transition& t) {
        if (data.size() < capacity) {
            data.push_back(t);
        } else {
            data[cursor] = t;
            cursor = (cursor + 1) % capacity;
        }
    }

    // Uniform sample of k distinct entries (Floyd), insertion-ordered.
    std::vector<Transition> sample(Rng& rng, std::size_t k) const {
        if (k > data.size()) throw std::invalid_argument("ReplayBuffer::sample: k exceeds size");
        std::vector<std::size_t> picked;
        picked.reserve(k);
        for (std::size_t j = data.size() - k; j < data.size(); ++j) {
            std::size_t t = uniform_below(rng, j + 1);
            if (std::find(picked.begin(), picked.end(), t) != picked.end())
                picked.push_back(j);
            else
                picked.push_back(t);
        }
        std::vector<Transition> out;
        out.reserve(k);
        for (std::size_t idx : picked) out.push_back(data[idx]);
        return out;
    }
};

// State-to-column encoding: state scalar scaled by 1/|X|; heterogeneous
// instances prepend the raw type index as the first coordinate.
struct InputEncoding {
    bool with_type = false;
    std::vector<float> inv_states;  // per type

    static InputEncoding for_instance(const BanditInstance& inst) {
        InputEncoding enc;
        enc.with_type = inst.num_types() > 1;
        enc.inv_states.reserve(inst.models.size());
        for (const ArmModel& m : inst.models)
            enc.inv_states.push_back(1.0f / static_cast<float>(m.num_states));
        return enc;
    }

    int dim() const { return with_type ? 2 : 1; }

    void fill_column(int type, int state, Eigen::Ref<MatF> mat, int col) const {
        if (with_type) {
            mat(0, col) = static_cast<float>(type);
            mat(1, col) = static_cast<float>(state) * inv_states[type];
        } else {
            mat(0, col) = static_cast<float>(state) * inv_states[type];
        }
    }
};

// Evaluation grid for the output normalizer: every (type, state) cell when
// the total count fits in 512, otherwise 512 uniformly spaced cells.
struct EvalGrid {
    std::vector<std::pair<int, int>> cells;  // (type, state)

    static EvalGrid for_instance(const BanditInstance& inst, std::size_t max_cells = 512) {
        std::vector<std::pair<int, int>> all;
        for (std::size_t t = 0; t < inst.models.size(); ++t)
            for (int x = 0; x < inst.models[t].num_states; ++x)
                all.emplace_back(static_cast<int>(t), x);
        EvalGrid grid;
        if (all.size() <= max_cells) {
            grid.cells = std::move(all);
        } else {
            grid.cells.reserve(max_cells);
            for (std::size_t k = 0; k < max_cells; ++k) {
                std::size_t pos = (k * (all.size() - 1)) / (max_cells - 1);
                grid.cells.push_back(all[pos]);
            }
        }
        return grid;
    }
};

struct TrainConfig {
    int batch_size = 32;
    float learning_rate = 1e-5f;
    double eps_initial = 1.0;
    double eps_decay = 0.9995;
    double eps_floor = 0.01;
    int sync_period = 200;
    std::size_t buffer_capacity = 1000;
    std::vector<int> hidden = {512, 256, 128};
    long trace_stride = 50;

    std::vector<int> widths(int input_dim) const {
        std::vector<int> ws;
        ws.push_back(input_dim);
        ws.insert(ws.end(), hidden.begin(), hidden.end());
        ws.push_back(2);
        return ws;
    }
};

// Target value for one stored tuple given the target net's outputs at s'
// and the current normalizer estimate. Reward carries the active bonus.
inline float q_target(const Transition& t, float target_q0_next, float target_q1_next,
                      float f_estimate) {
    const float r_lambda = t.reward + t.lambda * static_cast<float>(t.action);
    return r_lambda + std::max(target_q0_next, target_q1_next) - f_estimate;
}

namespace detail {

inline long long cell_key(int type, int state) {
    return (static_cast<long long>(type) << 32) | static_cast<unsigned>(state);
}

}  // namespace detail

// One optimization step on the mean squared error between main outputs at
// (s,a) and the bootstrapped targets. The normalizer is re-estimated from
// the main net over the evaluation grid on every call.
inline float train_batch(Mlp& net, const Mlp& target, Adam& opt,
                         const std::vector<Transition>& batch, const InputEncoding& enc,
                         const EvalGrid& grid) {
    if (batch.empty()) throw std::invalid_argument("train_batch: empty batch");

    // Column layout: grid cells first, then any batch states not on the grid.
    std::unordered_map<long long, int> col_of;
    col_of.reserve(grid.cells.size() + batch.size());
    std::vector<std::pair<int, int>> columns = grid.cells;
    for (std::size_t c = 0; c < grid.cells.size(); ++c)
        col_of.emplace(detail::cell_key(grid.cells[c].first, grid.cells[c].second),
                       static_cast<int>(c));
    for (const Transition& t : batch) {
        long long key = detail::cell_key(t.type, t.state);
        if (col_of.find(key) == col_of.end()) {
            col_of.emplace(key, static_cast<int>(columns.size()));
            columns.emplace_back(t.type, t.state);
        }
    }

    MatF x(enc.dim(), static_cast<int>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c)
        enc.fill_column(columns[c].first, columns[c].second, x, static_cast<int>(c));
    Mlp::Cache cache;
    MatF out = net.forward(x, &cache);

    double f_sum = 0.0;
    for (std::size_t c = 0; c < grid.cells.size(); ++c)
        f_sum += 0.5 * (out(0, static_cast<int>(c)) + out(1, static_cast<int>(c)));
    const float f_estimate = static_cast<float>(f_sum / static_cast<double>(grid.cells.size()));

    // Target net only sees the distinct next states.
    std::unordered_map<long long, int> next_col;
    std::vector<std::pair<int, int>> next_cells;
    for (const Transition& t : batch) {
        long long key = detail::cell_key(t.type, t.next_state);
        if (next_col.find(key) == next_col.end()) {
            next_col.emplace(key, static_cast<int>(next_cells.size()));
            next_cells.emplace_back(t.type, t.next_state);
        }
    }
    MatF xn(enc.dim(), static_cast<int>(next_cells.size()));
    for (std::size_t c = 0; c < next_cells.size(); ++c)
        enc.fill_column(next_cells[c].first, next_cells[c].second, xn, static_cast<int>(c));
    MatF tout = target.forward(xn);

    // Aggregate output gradients per distinct (type, state) column.
    std::vector<int> used;
    std::unordered_map<int, int> used_pos;
    MatF d_used(2, static_cast<int>(batch.size()));
    d_used.setZero();
    double loss = 0.0;
    const float inv_batch = 1.0f / static_cast<float>(batch.size());
    for (const Transition& t : batch) {
        const int col = col_of.at(detail::cell_key(t.type, t.state));
        const int ncol = next_col.at(detail::cell_key(t.type, t.next_state));
        const float y = q_target(t, tout(0, ncol), tout(1, ncol), f_estimate);
        const float pred = out(t.action, col);
        const float err = pred - y;
        loss += static_cast<double>(err) * static_cast<double>(err);
        auto it = used_pos.find(col);
        int slot;
        if (it == used_pos.end()) {
            slot = static_cast<int>(used.size());
            used_pos.emplace(col, slot);
            used.push_back(col);
        } else {
            slot = it->second;
        }
        d_used(t.action, slot) += 2.0f * err * inv_batch;
    }
    loss /= static_cast<double>(batch.size());

    // Backprop only through the columns that received gradient.
    Mlp::Cache reduced;
    reduced.acts.reserve(cache.acts.size());
    for (const MatF& a : cache.acts) reduced.acts.push_back(a(Eigen::all, used));
    Mlp::Grads grads = net.backward(reduced, d_used.leftCols(static_cast<int>(used.size())));
    opt.step(net, grads);

    if (!std::isfinite(loss) || !net.finite())
        throw ConvergenceError("training diverged: non-finite loss or parameters", loss);
    return static_cast<float>(loss);
}

struct DqnResult {
    std::vector<long> sampled_steps;
    std::vector<double> lambda_trace;
    std::vector<double> avg_reward_trace;
    std::vector<double> epsilon_trace;
    std::vector<float> losses;  // per-step mean loss; 0 before the buffer warms up
    double final_lambda = 0.0;
    double average_reward = 0.0;
    double final_epsilon = 0.0;
    std::uint64_t seed = 0;
    std::vector<IndexTable> index_tables;  // one per type, from the trained net
};

namespace detail {

inline IndexTable net_index_table(const Mlp& net, const InputEncoding& enc, int type,
                                  const ArmModel& model, double lambda) {
    IndexTable table;
    table.source = IndexSource::lagrangian;
    table.lambda = lambda;
    table.arm_label = model.label;
    table.values.resize(model.num_states);
    const int chunk = 512;
    for (int base = 0; base < model.num_states; base += chunk) {
        const int n = std::min(chunk, model.num_states - base);
        MatF x(enc.dim(), n);
        for (int j = 0; j < n; ++j) enc.fill_column(type, base + j, x, j);
        MatF out = net.forward(x);
        for (int j = 0; j < n; ++j)
            table.values[base + j] = static_cast<double>(out(1, j)) - static_cast<double>(out(0, j));
    }
    return table;
}

}  // namespace detail

// Full training loop: per-arm ε-greedy actions from the main net, replay
// pushes, one batch train per arm visit, target sync every sync_period
// steps, then the slow dual update and exploration decay.
inline DqnResult run_dqn(const BanditInstance& inst, const TrainConfig& cfg, long steps,
                         std::uint64_t seed, const StepSchedules* schedules = nullptr) {
    inst.check();
    if (steps <= 0) throw std::invalid_argument("run_dqn: steps must be positive");
    StepSchedules sched = schedules ? *schedules : builtin_schedules("default");

    const InputEncoding enc = InputEncoding::for_instance(inst);
    const EvalGrid grid = EvalGrid::for_instance(inst);
    Rng rng(seed);

    Mlp net(cfg.widths(enc.dim()), rng());
    Mlp target = net;
    Adam opt;
    opt.lr = cfg.learning_rate;
    opt.init(net);
    ReplayBuffer buffer(cfg.buffer_capacity);

    std::vector<CompiledArm> compiled;
    compiled.reserve(inst.models.size());
    for (const ArmModel& m : inst.models) compiled.emplace_back(m);

    const int num_arms = inst.num_arms();
    std::vector<int> state(num_arms, 0);
    double lambda = 0.0;
    double eps = cfg.eps_initial;
    double reward_sum = 0.0;

    DqnResult res;
    res.seed = seed;
    res.losses.reserve(static_cast<std::size_t>(steps));

    MatF one_col(enc.dim(), 1);
    for (long n = 0; n < steps; ++n) {
        int sum_u = 0;
        double step_reward = 0.0;
        float loss_sum = 0.0f;
        int loss_count = 0;
        for (int i = 0; i < num_arms; ++i) {
            const int t = inst.type_of[i];
            const ArmModel& model = inst.models[t];
            const int x = state[i];
            int u;
            if (canonical_u01(rng) < eps) {
                u = static_cast<int>(uniform_below(rng, 2));
            } else {
                enc.fill_column(t, x, one_col, 0);
                MatF q = net.forward(one_col);
                if (q(1, 0) > q(0, 0))
                    u = 1;
                else if (q(1, 0) < q(0, 0))
                    u = 0;
                else
                    u = static_cast<int>(uniform_below(rng, 2));
            }
            const double r = model.r(x, u);
            const int y = compiled[t].sample(x, u, rng);
            buffer.push(Transition{t, x, u, y, static_cast<float>(r), static_cast<float>(lambda)});
            if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
                std::vector<Transition> batch = buffer.sample(rng, cfg.batch_size);
                loss_sum += train_batch(net, target, opt, batch, enc, grid);
                ++loss_count;
            }
            state[i] = y;
            sum_u += u;
            step_reward += r;
        }
        if ((n + 1) % cfg.sync_period == 0) sync_target(net, target);
        lambda -= sched.beta(n) * (static_cast<double>(sum_u) - static_cast<double>(inst.budget));
        eps = std::max(cfg.eps_floor, eps * cfg.eps_decay);
        reward_sum += step_reward / static_cast<double>(num_arms);
        res.losses.push_back(loss_count > 0 ? loss_sum / static_cast<float>(loss_count) : 0.0f);
        if (n % cfg.trace_stride == 0 || n + 1 == steps) {
            res.sampled_steps.push_back(n);
            res.lambda_trace.push_back(lambda);
            res.avg_reward_trace.push_back(reward_sum / static_cast<double>(n + 1));
            res.epsilon_trace.push_back(eps);
        }
    }

    res.final_lambda = lambda;
    res.final_epsilon = eps;
    res.average_reward = reward_sum / static_cast<double>(steps);
    for (std::size_t t = 0; t < inst.models.size(); ++t)
        res.index_tables.push_back(
            detail::net_index_table(net, enc, static_cast<int>(t), inst.models[t], lambda));
    return res;
}

}  // namespace rmab
