#pragma once

#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "llmrl/core/error.hpp"

namespace llmrl::rl {

struct Transition {
    std::vector<double> state;
    int action = 0;
    double reward = 0.0;
    std::vector<double> next_state;
    bool done = false;
};

/// Sampled minibatch in column layout (one transition per column).
struct Batch {
    Eigen::MatrixXd states;
    Eigen::MatrixXd next_states;
    std::vector<int> actions;
    std::vector<double> rewards;
    std::vector<bool> dones;

    std::size_t size() const { return actions.size(); }
};

/// Fixed-capacity ring buffer; storage grows on demand up to capacity.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::size_t state_dim) : capacity_(capacity), dim_(state_dim) {
        if (capacity == 0) throw ArgumentError("ddqn_agent", "replay capacity must be positive");
    }

    void push(const Transition& t) {
        if (t.state.size() != dim_ || t.next_state.size() != dim_) {
            throw ArgumentError("ddqn_agent", "transition state dimension mismatch");
        }
        if (size_ < capacity_) {
            states_.insert(states_.end(), t.state.begin(), t.state.end());
            next_.insert(next_.end(), t.next_state.begin(), t.next_state.end());
            actions_.push_back(t.action);
            rewards_.push_back(t.reward);
            dones_.push_back(t.done);
            ++size_;
        } else {
            std::copy(t.state.begin(), t.state.end(), states_.begin() + head_ * dim_);
            std::copy(t.next_state.begin(), t.next_state.end(), next_.begin() + head_ * dim_);
            actions_[head_] = t.action;
            rewards_[head_] = t.reward;
            dones_[head_] = t.done;
        }
        head_ = (head_ + 1) % capacity_;
    }

    std::size_t size() const noexcept { return size_; }
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t state_dim() const noexcept { return dim_; }

    /// Uniform sampling with replacement.
    Batch sample(std::size_t batch_size, std::mt19937_64& rng) const {
        if (batch_size == 0 || size_ < batch_size) {
            throw ArgumentError("ddqn_agent", "replay buffer holds fewer transitions than the batch size");
        }
        std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
        std::vector<std::size_t> idx(batch_size);
        for (auto& i : idx) i = pick(rng);
        return gather(idx);
    }

    Batch gather(std::span<const std::size_t> idx) const {
        Batch b;
        const auto n = static_cast<Eigen::Index>(idx.size());
        const auto d = static_cast<Eigen::Index>(dim_);
        b.states.resize(d, n);
        b.next_states.resize(d, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const std::size_t i = idx[j];
            b.states.col(j) = Eigen::Map<const Eigen::VectorXd>(states_.data() + i * dim_, d);
            b.next_states.col(j) = Eigen::Map<const Eigen::VectorXd>(next_.data() + i * dim_, d);
            b.actions.push_back(actions_[i]);
            b.rewards.push_back(rewards_[i]);
            b.dones.push_back(dones_[i]);
        }
        return b;
    }

private:
    std::size_t capacity_;
    std::size_t dim_;
    std::size_t size_ = 0;
    std::size_t head_ = 0;
    std::vector<double> states_, next_;
    std::vector<int> actions_;
    std::vector<double> rewards_;
    std::vector<bool> dones_;
};

}  // namespace llmrl::rl
