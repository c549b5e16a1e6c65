#include "smoothac/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "smoothac/rng.hpp"
#include "smoothac/tensor.hpp"

namespace smoothac {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kGravity = 9.81;

double tolerance_gaussian(double x, double margin) { return std::pow(0.1, (x / margin) * (x / margin)); }

double clampd(double x, double bound) { return std::clamp(x, -bound, bound); }

void require_state_size(std::span<const double> s, std::size_t n) {
    if (s.size() != n) throw DimensionError("physical state has " + std::to_string(s.size()) + " entries, expected " + std::to_string(n));
}

class Pendulum final : public Env {
public:
    static constexpr double kMass = 1.0, kLength = 1.0, kMaxTorque = 5.0, kMaxSpeed = 20.0;

    explicit Pendulum(bool sparse)
        : Env(EnvSpec{sparse ? "pendulum_swingup_sparse" : "pendulum_swingup", 3, 1}), sparse_(sparse) {}

    std::vector<double> observation() const override { return {std::cos(theta_), std::sin(theta_), theta_dot_}; }
    std::vector<double> physical_state() const override { return {theta_, theta_dot_}; }
    void set_physical_state(std::span<const double> s) override {
        require_state_size(s, 2);
        theta_ = wrap_angle(s[0]);
        theta_dot_ = clampd(s[1], kMaxSpeed);
    }
    std::vector<double> state_bounds() const override { return {kPi, kMaxSpeed}; }
    double reward() const override {
        return sparse_ ? pendulum_sparse_reward(theta_, theta_dot_) : pendulum_dense_reward(theta_, theta_dot_);
    }
    std::unique_ptr<Env> clone() const override { return std::make_unique<Pendulum>(*this); }

protected:
    void reset_state(std::uint64_t seed) override {
        Rng rng(seed);
        theta_ = wrap_angle(kPi + uniform(rng, -0.1, 0.1));
        theta_dot_ = 0.0;
    }
    void integrate(std::span<const double> a) override {
        const double h = spec().dt / spec().physics_substeps;
        const double torque_accel = kMaxTorque * a[0] / (kMass * kLength * kLength);
        for (int k = 0; k < spec().physics_substeps; ++k) {
            const double accel = (kGravity / kLength) * std::sin(theta_) + torque_accel;
            theta_dot_ = clampd(theta_dot_ + h * accel, kMaxSpeed);
            theta_ = wrap_angle(theta_ + h * theta_dot_);
        }
    }

private:
    bool sparse_;
    double theta_ = kPi;
    double theta_dot_ = 0.0;
};

class Cartpole final : public Env {
public:
    static constexpr double kCartMass = 1.0, kPoleMass = 0.1, kHalfLength = 0.5, kMaxForce = 10.0;
    static constexpr double kRail = 3.0, kMaxCartSpeed = 10.0, kMaxPoleSpeed = 30.0;

    explicit Cartpole(bool sparse)
        : Env(EnvSpec{sparse ? "cartpole_swingup_sparse" : "cartpole_swingup", 5, 1}), sparse_(sparse) {}

    std::vector<double> observation() const override {
        return {x_, std::cos(theta_), std::sin(theta_), x_dot_, theta_dot_};
    }
    std::vector<double> physical_state() const override { return {x_, theta_, x_dot_, theta_dot_}; }
    void set_physical_state(std::span<const double> s) override {
        require_state_size(s, 4);
        x_ = clampd(s[0], kRail);
        theta_ = wrap_angle(s[1]);
        x_dot_ = clampd(s[2], kMaxCartSpeed);
        theta_dot_ = clampd(s[3], kMaxPoleSpeed);
    }
    std::vector<double> state_bounds() const override { return {kRail, kPi, kMaxCartSpeed, kMaxPoleSpeed}; }
    double reward() const override {
        return sparse_ ? cartpole_sparse_reward(x_, theta_) : cartpole_dense_reward(x_, theta_, theta_dot_, last_action_);
    }
    std::unique_ptr<Env> clone() const override { return std::make_unique<Cartpole>(*this); }

protected:
    void reset_state(std::uint64_t seed) override {
        Rng rng(seed);
        x_ = uniform(rng, -0.05, 0.05);
        theta_ = wrap_angle(kPi + uniform(rng, -0.05, 0.05));
        x_dot_ = 0.0;
        theta_dot_ = 0.0;
        last_action_ = 0.0;
    }
    void integrate(std::span<const double> a) override {
        last_action_ = a[0];
        const double force = kMaxForce * a[0];
        const double total = kCartMass + kPoleMass;
        const double h = spec().dt / spec().physics_substeps;
        for (int k = 0; k < spec().physics_substeps; ++k) {
            const double s = std::sin(theta_), c = std::cos(theta_);
            const double temp = (force + kPoleMass * kHalfLength * theta_dot_ * theta_dot_ * s) / total;
            const double theta_acc =
                (kGravity * s - c * temp) / (kHalfLength * (4.0 / 3.0 - kPoleMass * c * c / total));
            const double x_acc = temp - kPoleMass * kHalfLength * theta_acc * c / total;
            x_dot_ = clampd(x_dot_ + h * x_acc, kMaxCartSpeed);
            theta_dot_ = clampd(theta_dot_ + h * theta_acc, kMaxPoleSpeed);
            x_ += h * x_dot_;
            theta_ = wrap_angle(theta_ + h * theta_dot_);
            if (std::abs(x_) > kRail) {
                x_ = clampd(x_, kRail);
                x_dot_ = 0.0;
            }
        }
    }

private:
    bool sparse_;
    double x_ = 0.0, theta_ = kPi, x_dot_ = 0.0, theta_dot_ = 0.0;
    double last_action_ = 0.0;
};

class Reacher final : public Env {
public:
    static constexpr double kLink = 0.12, kGain = 20.0, kDamping = 2.0, kMaxSpeed = 20.0, kTolerance = 0.05;

    Reacher() : Env(EnvSpec{"reacher_easy", 8, 2}) {}

    std::vector<double> observation() const override {
        const auto [fx, fy] = fingertip();
        return {std::cos(q1_), std::sin(q1_), std::cos(q2_), std::sin(q2_), q1_dot_, q2_dot_, tx_ - fx, ty_ - fy};
    }
    std::vector<double> physical_state() const override { return {q1_, q2_, q1_dot_, q2_dot_, tx_, ty_}; }
    void set_physical_state(std::span<const double> s) override {
        require_state_size(s, 6);
        q1_ = wrap_angle(s[0]);
        q2_ = wrap_angle(s[1]);
        q1_dot_ = clampd(s[2], kMaxSpeed);
        q2_dot_ = clampd(s[3], kMaxSpeed);
        tx_ = s[4];
        ty_ = s[5];
    }
    std::vector<double> state_bounds() const override { return {kPi, kPi, kMaxSpeed, kMaxSpeed, 2 * kLink, 2 * kLink}; }
    double reward() const override {
        const auto [fx, fy] = fingertip();
        return std::hypot(tx_ - fx, ty_ - fy) < kTolerance ? 1.0 : 0.0;
    }
    std::unique_ptr<Env> clone() const override { return std::make_unique<Reacher>(*this); }

protected:
    void reset_state(std::uint64_t seed) override {
        Rng rng(seed);
        q1_ = wrap_angle(uniform(rng, -kPi, kPi));
        q2_ = wrap_angle(uniform(rng, -kPi, kPi));
        q1_dot_ = q2_dot_ = 0.0;
        const double r = uniform(rng, 0.05, 0.20);
        const double phi = uniform(rng, -kPi, kPi);
        tx_ = r * std::cos(phi);
        ty_ = r * std::sin(phi);
    }
    void integrate(std::span<const double> a) override {
        const double h = spec().dt / spec().physics_substeps;
        for (int k = 0; k < spec().physics_substeps; ++k) {
            q1_dot_ = clampd(q1_dot_ + h * (kGain * a[0] - kDamping * q1_dot_), kMaxSpeed);
            q2_dot_ = clampd(q2_dot_ + h * (kGain * a[1] - kDamping * q2_dot_), kMaxSpeed);
            q1_ = wrap_angle(q1_ + h * q1_dot_);
            q2_ = wrap_angle(q2_ + h * q2_dot_);
        }
    }

private:
    std::pair<double, double> fingertip() const {
        return {kLink * std::cos(q1_) + kLink * std::cos(q1_ + q2_), kLink * std::sin(q1_) + kLink * std::sin(q1_ + q2_)};
    }

    double q1_ = 0.0, q2_ = 0.0, q1_dot_ = 0.0, q2_dot_ = 0.0, tx_ = 0.1, ty_ = 0.0;
};

}  // namespace

double wrap_angle(double theta) {
    double w = std::remainder(theta, 2.0 * kPi);  // [-pi, pi]
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

std::vector<double> Env::reset(std::uint64_t seed) {
    steps_ = 0;
    reset_state(seed);
    return observation();
}

StepResult Env::step(std::span<const double> action) {
    if (action.size() != spec_.action_dim) {
        throw DimensionError("env '" + spec_.id + "': action has " + std::to_string(action.size()) + " entries, expected " +
                             std::to_string(spec_.action_dim));
    }
    if (done()) throw ContractError("env '" + spec_.id + "': step after episode end");
    StepResult result;
    std::vector<double> a(action.begin(), action.end());
    for (double& x : a) {
        if (std::isnan(x)) throw ContractError("env '" + spec_.id + "': NaN action");
        if (x < -1.0 || x > 1.0) {
            x = std::clamp(x, -1.0, 1.0);
            result.action_clipped = true;
        }
    }
    integrate(a);
    ++steps_;
    result.observation = observation();
    result.reward = reward();
    result.done = done();
    return result;
}

StepResult step_repeated(Env& env, std::span<const double> action, int repeat) {
    if (repeat < 1) throw ContractError("action repeat must be >= 1");
    StepResult total;
    for (int k = 0; k < repeat && !env.done(); ++k) {
        StepResult r = env.step(action);
        total.reward += r.reward;
        total.action_clipped = total.action_clipped || r.action_clipped;
        total.done = r.done;
        total.observation = std::move(r.observation);
    }
    if (total.observation.empty()) total.observation = env.observation();
    return total;
}

double pendulum_dense_reward(double theta, double theta_dot) {
    const double upright = (1.0 + std::cos(theta)) / 2.0;
    const double small_velocity = (1.0 + tolerance_gaussian(theta_dot, 5.0)) / 2.0;
    return upright * small_velocity;
}

double pendulum_sparse_reward(double theta, double /*theta_dot*/) {
    return std::abs(wrap_angle(theta)) < kPi / 6.0 ? 1.0 : 0.0;
}

double cartpole_dense_reward(double x, double theta, double theta_dot, double action) {
    const double upright = (1.0 + std::cos(theta)) / 2.0;
    const double centered = (1.0 + tolerance_gaussian(x, 2.0)) / 2.0;
    const double small_control = (4.0 + std::max(0.0, 1.0 - 0.9 * action * action)) / 5.0;
    const double small_velocity = (1.0 + tolerance_gaussian(theta_dot, 5.0)) / 2.0;
    return upright * centered * small_control * small_velocity;
}

double cartpole_sparse_reward(double x, double theta) {
    return (std::abs(x) < 0.25 && std::cos(theta) > 0.995) ? 1.0 : 0.0;
}

double pendulum_energy(double theta, double theta_dot) {
    constexpr double m = Pendulum::kMass, l = Pendulum::kLength;
    return 0.5 * m * l * l * theta_dot * theta_dot + m * kGravity * l * std::cos(theta);
}

std::unique_ptr<Env> make_env(const std::string& id) {
    if (id == "pendulum_swingup") return std::make_unique<Pendulum>(false);
    if (id == "pendulum_swingup_sparse") return std::make_unique<Pendulum>(true);
    if (id == "cartpole_swingup") return std::make_unique<Cartpole>(false);
    if (id == "cartpole_swingup_sparse") return std::make_unique<Cartpole>(true);
    if (id == "reacher_easy") return std::make_unique<Reacher>();
    throw ConfigError("unknown environment id '" + id + "'");
}

std::vector<std::string> registered_env_ids() {
    return {"pendulum_swingup", "pendulum_swingup_sparse", "cartpole_swingup", "cartpole_swingup_sparse", "reacher_easy"};
}

}  // namespace smoothac
