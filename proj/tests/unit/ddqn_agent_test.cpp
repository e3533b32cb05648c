#include <gtest/gtest.h>

#include "llmrl/data/synthetic.hpp"
#include "llmrl/rl/trainer.hpp"

using namespace llmrl;
using namespace llmrl::rl;

namespace {

double weighted_output(const QNetwork& net, const Matrix& x, const Matrix& w) {
    return (net.forward(x).array() * w.array()).sum();
}

Transition terminal(std::vector<double> s, int a, double r) { return {s, a, r, s, true}; }

TrainConfig tiny_config() {
    TrainConfig c;
    c.runs = 2;
    c.episodes_per_run = 2;
    c.batch_size = 8;
    c.buffer_capacity = 1000;
    c.target_sync_interval = 20;
    c.hidden = {8};
    c.learning_rate = 1e-3;
    c.base_seed = 11;
    return c;
}

EnvFactory tiny_factory() {
    auto frame = to_frame(synthetic::bars_from_closes(synthetic::regime_closes(120), make_date(2015, 1, 5)));
    const auto dates = frame.index();
    auto make = [frame, dates](std::size_t a, std::size_t b) {
        env::EpisodeConfig e;
        e.start = dates[a];
        e.end = dates[b];
        e.window = 5;
        return env::TradingEnv(frame, e);
    };
    return {[make](std::size_t) { return make(10, 80); }, [make](std::size_t) { return make(80, 119); }};
}

}  // namespace

TEST(QNetwork, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    QNetwork net(4, {6, 5}, 2);
    net.initialize(rng);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix x(4, 3), w(2, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
    QNetwork::Cache cache;
    net.forward(x, cache);
    std::vector<double> grad(net.parameter_count());
    net.backward(cache, w, grad);
    auto p = net.parameters();
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + h;
        const double up = weighted_output(net, x, w);
        p[i] = keep - h;
        const double down = weighted_output(net, x, w);
        p[i] = keep;
        EXPECT_NEAR(grad[i], (up - down) / (2 * h), 1e-6) << "parameter " << i;
    }
}

TEST(TdTargets, DoubleQSelectsWithOnlineEvaluatesWithTarget) {
    // One-layer nets with zero weights: outputs equal the biases.
    QNetwork online(1, {}, 2), target(1, {}, 2);
    online.bias(0) << 0.0, 1.0;  // online prefers LONG
    target.bias(0) << 5.0, 2.0;  // target would prefer SHORT
    ReplayBuffer buf(4, 1);
    buf.push({{0.0}, 0, 0.5, {0.0}, false});
    buf.push(terminal({0.0}, 1, -0.25));
    std::vector<std::size_t> idx{0, 1};
    auto y = td_targets(buf.gather(idx), 0.9, online, target);
    EXPECT_DOUBLE_EQ(y(0), 0.5 + 0.9 * 2.0);
    EXPECT_DOUBLE_EQ(y(1), -0.25);
}

TEST(ReplayBuffer, RingOverwriteAndSampling) {
    ReplayBuffer buf(3, 1);
    for (int i = 0; i < 5; ++i) buf.push(terminal({double(i)}, i % 2, i));
    EXPECT_EQ(buf.size(), 3u);
    std::vector<std::size_t> idx{0, 1, 2};
    auto b = buf.gather(idx);
    // Slots 0 and 1 were overwritten by transitions 3 and 4.
    EXPECT_EQ(b.rewards, (std::vector<double>{3, 4, 2}));
    EXPECT_EQ(b.states(0, 1), 4.0);
    std::mt19937_64 rng(1);
    EXPECT_EQ(buf.sample(3, rng).size(), 3u);
    EXPECT_THROW(buf.sample(4, rng), ArgumentError);
    ReplayBuffer empty(3, 1);
    EXPECT_THROW(empty.sample(1, rng), ArgumentError);
    EXPECT_THROW(buf.push(terminal({1.0, 2.0}, 0, 0)), ArgumentError);
}

TEST(Agent, LearnsTerminalRewards) {
    TrainConfig c = tiny_config();
    c.learning_rate = 1e-2;
    c.batch_size = 16;
    DdqnAgent agent(2, c, 5);
    ReplayBuffer buf(100, 2);
    for (int i = 0; i < 50; ++i) {
        buf.push(terminal({1.0, 0.0}, 1, 1.0));
        buf.push(terminal({1.0, 0.0}, 0, -1.0));
    }
    double first = agent.train_step(buf), last = 0.0;
    for (int i = 0; i < 399; ++i) last = agent.train_step(buf);
    EXPECT_LT(last, first);
    auto q = agent.q(std::vector<double>{1.0, 0.0});
    EXPECT_NEAR(q[1], 1.0, 0.05);
    EXPECT_NEAR(q[0], -1.0, 0.05);
    EXPECT_EQ(agent.act(std::vector<double>{1.0, 0.0}, 0.0), kActionLong);
    EXPECT_EQ(agent.updates(), 400u);
    EXPECT_EQ(agent.target(), agent.online());  // synced on the 400th step
}

TEST(Agent, RejectsBadInput) {
    DdqnAgent agent(2, tiny_config(), 1);
    EXPECT_THROW(agent.act(std::vector<double>{std::nan(""), 0.0}, 0.0), ArgumentError);
    EXPECT_THROW(agent.act(std::vector<double>{0.0, 0.0}, 1.5), ArgumentError);
    TrainConfig bad = tiny_config();
    bad.gamma = 0.0;
    EXPECT_THROW(bad.validate(), ArgumentError);
    bad = tiny_config();
    bad.buffer_capacity = 4;
    EXPECT_THROW(bad.validate(), ArgumentError);
}

TEST(Checkpoint, RoundTripAndDigest) {
    DdqnAgent agent(3, tiny_config(), 9);
    const auto digest = config_digest(tiny_config());
    auto j = checkpoint(agent.online(), digest);
    EXPECT_EQ(load_checkpoint(nlohmann::json::parse(j.dump()), digest), agent.online());
    EXPECT_THROW(load_checkpoint(j, "deadbeef"), ConfigError);
    j["parameters"].erase(0);
    EXPECT_THROW(load_checkpoint(j), SchemaError);
    TrainConfig other = tiny_config();
    other.gamma = 0.9;
    EXPECT_NE(config_digest(other), digest);
}

TEST(Trainer, WorkerCountDoesNotChangeResults) {
    auto cfg = tiny_config();
    auto one = train(tiny_factory(), cfg);
    cfg.workers = 2;
    auto two = train(tiny_factory(), cfg);
    ASSERT_EQ(one.size(), 2u);
    for (std::size_t i = 0; i < one.size(); ++i) {
        EXPECT_EQ(one[i].seed, 11u + i);
        EXPECT_EQ(to_json(one[i]).dump(), to_json(two[i]).dump());
        EXPECT_EQ(one[i].train_sr.size(), 2u);
        EXPECT_EQ(one[i].equity_curve.size(), 40u);
    }
    auto back = run_record_from_json(to_json(one[0]));
    EXPECT_EQ(to_json(back).dump(), to_json(one[0]).dump());
}

TEST(Trainer, EpsilonSchedule) {
    TrainConfig c;
    EXPECT_DOUBLE_EQ(epsilon_at(c, 0, 100), 1.0);
    EXPECT_DOUBLE_EQ(epsilon_at(c, 50, 100), 1.0 + 0.5 * (0.01 - 1.0));
    EXPECT_NEAR(epsilon_at(c, 500, 100), 0.01, 1e-15);
}
