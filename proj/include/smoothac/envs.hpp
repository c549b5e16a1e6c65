#pragma once

// State-based continuous-control tasks.
//
// Every task integrates its ODE with semi-implicit Euler, `physics_substeps`
// substeps per control step of `dt` seconds. One call to Env::step is one
// control step, with reward in [0, 1]. Episodes last `episode_length` control
// steps and never terminate early. Actions live in [-1, 1]^action_dim; values
// outside are clipped and flagged.
//
// pendulum_swingup[_sparse]
//   state (theta, theta_dot); theta = 0 upright, wrapped to (-pi, pi].
//   theta_ddot = (g / l) sin(theta) + max_torque * a / (m l^2)
//   m = 1 kg, l = 1 m, g = 9.81, max_torque = 5 N m, |theta_dot| <= 20 rad/s
//   obs (cos theta, sin theta, theta_dot)
//   reset: theta = pi + U(-0.1, 0.1), theta_dot = 0
//   dense:  (1 + cos theta) / 2 * (1 + 0.1^((theta_dot / 5)^2)) / 2
//   sparse: 1 if |theta| < pi/6 (strict), else 0
//
// cartpole_swingup[_sparse]
//   state (x, theta, x_dot, theta_dot); theta = 0 upright.
//   cart 1 kg, pole 0.1 kg, pole half-length 0.5 m, max force 10 N, g = 9.81.
//   |x| <= 3 m (rail ends stop the cart), |x_dot| <= 10 m/s, |theta_dot| <= 30 rad/s
//   obs (x, cos theta, sin theta, x_dot, theta_dot)
//   reset: x = U(-0.05, 0.05), theta = pi + U(-0.05, 0.05), velocities 0
//   dense:  upright * centered * small_control * small_velocity with
//           upright = (1 + cos theta) / 2, centered = (1 + 0.1^((x / 2)^2)) / 2,
//           small_control = (4 + (1 - 0.9 a^2)) / 5, small_velocity = (1 + 0.1^((theta_dot / 5)^2)) / 2
//   sparse: 1 if |x| < 0.25 and cos theta > 0.995 (strict), else 0
//
// reacher_easy
//   planar two-link arm, link lengths 0.12 m; state (q1, q2, q1_dot, q2_dot)
//   plus a fixed target. q_ddot_i = 20 a_i - 2 q_dot_i, |q_dot_i| <= 20 rad/s.
//   obs (cos q1, sin q1, cos q2, sin q2, q1_dot, q2_dot, target - fingertip)
//   reset: joints U(-pi, pi], velocities 0, target at radius U(0.05, 0.20) and
//          uniform angle
//   reward: 1 if |target - fingertip| < 0.05 (strict), else 0

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace smoothac {

struct EnvSpec {
    std::string id;
    std::size_t observation_dim = 0;
    std::size_t action_dim = 0;
    int episode_length = 1000;
    int action_repeat = 2;
    double dt = 0.02;
    int physics_substeps = 10;
};

struct StepResult {
    std::vector<double> observation;
    double reward = 0.0;
    bool done = false;
    bool action_clipped = false;
};

class Env {
public:
    virtual ~Env() = default;

    [[nodiscard]] const EnvSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] int steps() const noexcept { return steps_; }
    [[nodiscard]] bool done() const noexcept { return steps_ >= spec_.episode_length; }

    std::vector<double> reset(std::uint64_t seed);
    // One control step. Throws ContractError on NaN actions or stepping past the episode end.
    StepResult step(std::span<const double> action);

    [[nodiscard]] virtual std::vector<double> observation() const = 0;
    [[nodiscard]] virtual std::vector<double> physical_state() const = 0;
    virtual void set_physical_state(std::span<const double> state) = 0;
    // Clamp bound for each physical state component (angles report pi).
    [[nodiscard]] virtual std::vector<double> state_bounds() const = 0;
    [[nodiscard]] virtual double reward() const = 0;
    [[nodiscard]] virtual std::unique_ptr<Env> clone() const = 0;

protected:
    explicit Env(EnvSpec spec) : spec_(std::move(spec)) {}
    virtual void reset_state(std::uint64_t seed) = 0;
    virtual void integrate(std::span<const double> action) = 0;

private:
    EnvSpec spec_;
    int steps_ = 0;
};

// Applies `repeat` control steps with the same action, stopping at the episode
// end; rewards are summed.
StepResult step_repeated(Env& env, std::span<const double> action, int repeat);

double wrap_angle(double theta);  // into (-pi, pi]

std::unique_ptr<Env> make_env(const std::string& id);
std::vector<std::string> registered_env_ids();

// Task reward functions, pure in the physical state.
double pendulum_dense_reward(double theta, double theta_dot);
double pendulum_sparse_reward(double theta, double theta_dot);
double cartpole_dense_reward(double x, double theta, double theta_dot, double action);
double cartpole_sparse_reward(double x, double theta);
double pendulum_energy(double theta, double theta_dot);

}  // namespace smoothac
