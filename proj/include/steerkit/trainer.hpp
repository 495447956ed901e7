#pragma once

// Plain gradient descent for adapters and weight updates, with analytic
// gradients checked against central finite differences.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "steerkit/adapters.hpp"
#include "steerkit/feature_model.hpp"
#include "steerkit/nanomodel.hpp"
#include "steerkit/numkit.hpp"
#include "steerkit/rng.hpp"
#include "steerkit/subspace.hpp"

namespace steerkit {

// Returns the loss at theta; writes the gradient when grad is non-null.
using ObjectiveFn = std::function<double(const Vector& theta, Vector* grad)>;

inline constexpr double kFiniteDifferenceStep = 1e-5;

// Max over probe_count random coordinates of |g - g_fd| / max(|g|, |g_fd|, 1),
// with g_fd a central difference of the given step.
double grad_check(const ObjectiveFn& f, const Vector& theta, std::size_t probe_count, Rng& rng,
                  double step = kFiniteDifferenceStep);

struct GdOptions {
  double lr = 1e-2;
  std::size_t steps = 1000;
  // Halve lr after this many consecutive loss increases, at most max_halvings
  // times; parameters restart from the best point seen.
  std::size_t halving_patience = 10;
  std::size_t max_halvings = 10;
  // Stop once the loss is at or below this value.
  double target_loss = -std::numeric_limits<double>::infinity();
  std::size_t grad_check_probes = 16;
  std::uint64_t seed = 0;
  std::size_t max_curve_points = 1000;
  // Applied to the parameters after every update (e.g. a projection).
  std::function<void(Vector&)> after_step;
};

struct GdResult {
  Vector theta;
  Vector loss_curve;  // decimated to at most max_curve_points, last point kept
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double grad_check_max_rel_err = 0.0;  // at the starting point
  std::size_t steps_run = 0;
  std::size_t halvings = 0;
  double final_lr = 0.0;
};

// Throws DivergenceError (with the step index) on a non-finite loss.
GdResult gradient_descent(const ObjectiveFn& f, Vector theta, const GdOptions& opts);

// Keeps at most max_points samples of a curve, always including the last.
Vector decimate(const Vector& curve, std::size_t max_points);

// ---- block-model training ----

enum class Objective { oracle_match, target_regression };
enum class Trainable { steering, weight, joint };
enum class OrthCadence { every_step, never };

std::string to_string(Objective o);
std::string to_string(Trainable t);
std::string to_string(OrthCadence c);

struct TrainConfig {
  double lr = 1e-2;
  std::size_t steps = 1000;
  Objective objective = Objective::target_regression;
  Trainable trainables = Trainable::steering;
  OrthCadence orth_cadence = OrthCadence::never;
  std::uint64_t seed = 0;
  // Where the objective is measured: post_block or post_mlp.
  TraceSite site = TraceSite::post_block;
  double target_loss = 0.0;
  std::size_t grad_check_probes = 16;
  BlockOptions block;
};

struct TrainModel {
  GluParams glu;
  AttnParams attn;
};

// One Sequence per sample. For target_regression the targets are site values;
// for oracle_match they are shifts added to the base model's site values.
struct TrainData {
  std::vector<Sequence> inputs;
  std::vector<Sequence> targets;
};

struct TrainResult {
  TrainConfig config;
  Vector loss_curve;
  SteeringAdapter steer;
  WeightUpdate wupd;
  bool has_steer = false;
  bool has_wupd = false;
  double grad_check_max_rel_err = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t halvings = 0;
  double final_lr = 0.0;
  std::size_t steps_run = 0;
  // Joint + every_step: worst normalised column overlap after any step.
  double max_orth_overlap = 0.0;
};

// Mean squared error over all positions and coordinates of the site values,
// as a function of the flat [steer params, B, A] vector.
class BlockObjective {
 public:
  BlockObjective(const TrainConfig& cfg, const TrainModel& model, const TrainData& data,
                 const SteeringAdapter* steer, const WeightUpdate* wupd);

  double operator()(const Vector& theta, Vector* grad) const;

  std::size_t param_count() const;
  Vector pack(const SteeringAdapter* steer, const WeightUpdate* wupd) const;
  void unpack(const Vector& theta, SteeringAdapter* steer, WeightUpdate* wupd) const;

 private:
  TrainConfig cfg_;
  TrainModel model_;
  std::optional<SteeringAdapter> steer_;
  std::optional<WeightUpdate> wupd_;
  Sequence post_attn_;  // per position, all samples flattened
  Sequence target_;
};

TrainResult train(const TrainConfig& cfg, const TrainModel& model, const TrainData& data,
                  const SteeringAdapter* steer_init, const WeightUpdate* wupd_init);

// ---- problems ----

struct AdapterSpec {
  Locus locus = Locus::post_block;
  AdapterKind kind = AdapterKind::full;
  std::size_t rank = 1;
  Activation phi = Activation::identity;
};

struct OracleFitResult {
  TrainResult train;
  OracleTarget oracle;
  double relative_residual = 0.0;  // of the trained adapter
  // Exact least-squares optimum for linear full adapters at post_mlp or
  // post_block; empty otherwise.
  std::optional<double> closed_form_residual;
};

// Trains an adapter on the base model so that its shift at `site` matches
// the fine-tuning oracle there.
OracleFitResult fit_oracle_adapter(const TrainModel& base, const TrainModel& ft, TraceSite site,
                                   const AdapterSpec& spec, const std::vector<Sequence>& inputs,
                                   const TrainConfig& cfg);

// Two-dimensional ReLU example: x = (t, 0), F(x) = relu(x), W = I and target
// gamma1 x + gamma2 F(x), t on a uniform grid in [-1, 1].
struct Joint2dProblem {
  FeatureModel model;
  Matrix target;
};

Joint2dProblem make_joint_2d(std::size_t n = 64, double gamma1 = 0.3, double gamma2 = -0.7);

enum class Joint2dMode { joint, steering_only, ft_only };
std::string to_string(Joint2dMode m);

struct Joint2dResult {
  Joint2dMode mode = Joint2dMode::joint;
  GdResult gd;
  Matrix dh;
  Matrix dw;
  double final_mse = 0.0;
  // Least-squares optimum over the restricted family (steering-only / FT-only).
  double family_floor = 0.0;
};

// MSE = ||G - g_hat||_F^2 / (2n), trained from zero.
Joint2dResult train_joint_2d(const Joint2dProblem& prob, Joint2dMode mode, const GdOptions& opts);
double joint_2d_floor(const Joint2dProblem& prob, Joint2dMode mode);

}  // namespace steerkit
