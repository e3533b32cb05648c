#pragma once

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/core/common.hpp"
#include "llmrl/rl/qnetwork.hpp"
#include "llmrl/rl/replay_buffer.hpp"

namespace llmrl::rl {

inline constexpr int kActionShort = 0;
inline constexpr int kActionLong = 1;

enum class OptimizerKind { adam, sgd };

struct TrainConfig {
    std::size_t runs = 25;
    std::size_t episodes_per_run = 50;
    double gamma = 0.99;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::size_t batch_size = 64;
    std::size_t buffer_capacity = 100'000;
    std::size_t target_sync_interval = 1'000;  // gradient steps between target copies
    double epsilon_start = 1.0;
    double epsilon_end = 0.01;
    std::size_t epsilon_decay_steps = 0;  // 0: decay linearly over the whole run
    std::vector<std::size_t> hidden{128, 128};
    double grad_clip_norm = 1.0;
    double reward_scale = 1.0;  // multiplies rewards before they enter the buffer
    std::size_t train_every = 1;  // environment steps per gradient step
    std::uint64_t base_seed = 0;  // run i uses base_seed + i
    std::size_t workers = 1;

    void validate() const {
        constexpr const char* kModule = "ddqn_agent";
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ArgumentError(kModule, "gamma must be in (0, 1]");
        if (!(epsilon_start >= 0 && epsilon_start <= 1 && epsilon_end >= 0 && epsilon_end <= 1)) {
            throw ArgumentError(kModule, "epsilon must be in [0, 1]");
        }
        if (learning_rate < 0) throw ArgumentError(kModule, "learning rate must be >= 0");
        if (batch_size == 0 || buffer_capacity < batch_size) {
            throw ArgumentError(kModule, "buffer capacity must hold at least one batch");
        }
        if (target_sync_interval == 0 || train_every == 0) throw ArgumentError(kModule, "intervals must be positive");
        if (runs == 0 || episodes_per_run == 0) throw ArgumentError(kModule, "runs and episodes must be positive");
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"runs", c.runs},
            {"episodes_per_run", c.episodes_per_run},
            {"gamma", c.gamma},
            {"learning_rate", c.learning_rate},
            {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
            {"batch_size", c.batch_size},
            {"buffer_capacity", c.buffer_capacity},
            {"target_sync_interval", c.target_sync_interval},
            {"epsilon_start", c.epsilon_start},
            {"epsilon_end", c.epsilon_end},
            {"epsilon_decay_steps", c.epsilon_decay_steps},
            {"hidden", c.hidden},
            {"grad_clip_norm", c.grad_clip_norm},
            {"reward_scale", c.reward_scale},
            {"train_every", c.train_every},
            {"base_seed", c.base_seed}};
}

/// Stable digest of everything that affects training (workers excluded).
inline std::string config_digest(const TrainConfig& c, const std::string& extra = {}) {
    return hex64(fnv1a64(to_json(c).dump() + extra));
}

/// Greedy action with ties going to LONG.
inline int greedy_action(double q_short, double q_long) { return q_long >= q_short ? kActionLong : kActionShort; }

inline void check_finite(std::span<const double> obs) {
    for (double v : obs) {
        if (!std::isfinite(v)) throw ArgumentError("ddqn_agent", "non-finite observation");
    }
}

inline std::array<double, 2> q_values(const QNetwork& net, std::span<const double> obs) {
    Matrix x = Eigen::Map<const Vector>(obs.data(), static_cast<Eigen::Index>(obs.size()));
    Matrix q = net.forward(x);
    return {q(kActionShort, 0), q(kActionLong, 0)};
}

/// Epsilon-greedy: uniform over {0, 1} with probability epsilon, else greedy.
inline int act(const QNetwork& net, std::span<const double> obs, double epsilon, std::mt19937_64& rng) {
    check_finite(obs);
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ArgumentError("ddqn_agent", "epsilon outside [0, 1]");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (epsilon > 0.0 && u(rng) < epsilon) return std::uniform_int_distribution<int>(0, 1)(rng);
    auto q = q_values(net, obs);
    return greedy_action(q[0], q[1]);
}

/// Double-Q targets: the online network picks a' = argmax Q_online(s', .), the
/// target network scores it. Terminal transitions keep only the reward.
inline Vector td_targets(const Batch& batch, double gamma, const QNetwork& online, const QNetwork& target) {
    if (batch.size() == 0) throw ArgumentError("ddqn_agent", "empty batch");
    const Matrix q_online = online.forward(batch.next_states);
    const Matrix q_target = target.forward(batch.next_states);
    Vector y(static_cast<Eigen::Index>(batch.size()));
    for (Eigen::Index j = 0; j < y.size(); ++j) {
        const double r = batch.rewards[j];
        if (batch.dones[j]) {
            y(j) = r;
            continue;
        }
        const int a = greedy_action(q_online(kActionShort, j), q_online(kActionLong, j));
        y(j) = r + gamma * q_target(a, j);
    }
    return y;
}

/// Online/target network pair with its optimizer state.
class DdqnAgent {
public:
    DdqnAgent(std::size_t obs_dim, const TrainConfig& cfg, std::uint64_t seed)
        : cfg_(cfg), rng_(seed), online_(obs_dim, cfg.hidden, 2), adam_(0) {
        cfg_.validate();
        online_.initialize(rng_);
        target_ = online_;
        adam_ = Adam(online_.parameter_count());
        grad_.assign(online_.parameter_count(), 0.0);
    }

    int act(std::span<const double> obs, double epsilon) { return rl::act(online_, obs, epsilon, rng_); }
    std::array<double, 2> q(std::span<const double> obs) const { return q_values(online_, obs); }

    /// One gradient step on the mean squared TD error of a sampled batch.
    double train_step(const ReplayBuffer& buffer) {
        return train_on_batch(buffer.sample(cfg_.batch_size, rng_));
    }

    double train_on_batch(const Batch& batch) {
        const Vector y = td_targets(batch, cfg_.gamma, online_, target_);
        QNetwork::Cache cache;
        const Matrix q = online_.forward(batch.states, cache);
        const auto n = static_cast<double>(batch.size());
        Matrix grad_out = Matrix::Zero(q.rows(), q.cols());
        double loss = 0.0;
        for (Eigen::Index j = 0; j < q.cols(); ++j) {
            const double err = q(batch.actions[j], j) - y(j);
            loss += err * err / n;
            grad_out(batch.actions[j], j) = 2.0 * err / n;
        }
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "non-finite TD loss " << loss << " at gradient step " << updates_ << " (batch " << batch.size()
                << ", max |y| " << y.cwiseAbs().maxCoeff() << ", max |Q| " << q.cwiseAbs().maxCoeff()
                << ", parameters finite: " << (online_.all_finite() ? "yes" : "no") << ")";
            throw TrainingError("ddqn_agent", msg.str());
        }
        online_.backward(cache, grad_out, grad_);
        if (cfg_.grad_clip_norm > 0) {
            double norm = 0.0;
            for (double g : grad_) norm += g * g;
            norm = std::sqrt(norm);
            if (norm > cfg_.grad_clip_norm) {
                const double s = cfg_.grad_clip_norm / norm;
                for (double& g : grad_) g *= s;
            }
        }
        if (cfg_.learning_rate > 0) {
            if (cfg_.optimizer == OptimizerKind::adam) {
                adam_.step(online_.parameters(), grad_, cfg_.learning_rate);
            } else {
                auto p = online_.parameters();
                for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg_.learning_rate * grad_[i];
            }
        }
        ++updates_;
        if (updates_ % cfg_.target_sync_interval == 0) sync_target();
        return loss;
    }

    void sync_target() { target_ = online_; }

    const QNetwork& online() const noexcept { return online_; }
    const QNetwork& target() const noexcept { return target_; }
    QNetwork& online() noexcept { return online_; }
    QNetwork& target() noexcept { return target_; }
    std::mt19937_64& rng() noexcept { return rng_; }
    std::size_t updates() const noexcept { return updates_; }
    const TrainConfig& config() const noexcept { return cfg_; }

private:
    TrainConfig cfg_;
    std::mt19937_64 rng_;
    QNetwork online_;
    QNetwork target_;
    Adam adam_;
    std::vector<double> grad_;
    std::size_t updates_ = 0;
};

}  // namespace llmrl::rl
