#pragma once

#include <optional>
#include <vector>

#include "kltwin/errors.hpp"
#include "kltwin/field.hpp"
#include "kltwin/rng.hpp"

namespace kltwin {

// Fully connected network with tanh hidden activations and identity output.
// Weights are stored per layer as (fan_out x fan_in); an empty `hidden` list
// degenerates to a single linear layer.
struct MlpShape {
    Index n_in = 0;
    Index n_out = 0;
    std::vector<Index> hidden;

    void validate() const;
};

class Mlp {
  public:
    Mlp(const MlpShape& shape, RngStream& rng);

    Index n_in() const { return weights_.front().cols(); }
    Index n_out() const { return weights_.back().rows(); }
    Index n_layers() const { return static_cast<Index>(weights_.size()); }
    // Width of the input feeding the final linear layer.
    Index last_layer_width() const { return weights_.back().cols(); }

    const Mat& weight(Index layer) const { return weights_.at(static_cast<std::size_t>(layer)); }
    const Vec& bias(Index layer) const { return biases_.at(static_cast<std::size_t>(layer)); }
    Mat& weight(Index layer) { return weights_.at(static_cast<std::size_t>(layer)); }
    Vec& bias(Index layer) { return biases_.at(static_cast<std::size_t>(layer)); }

    // Columns of `x` are input vectors; returns one output column per input.
    Mat apply_columns(const Mat& x) const;
    Vec apply(const Vec& x) const;

    // Activations feeding the final linear layer (the inputs themselves when
    // there are no hidden layers); one column per input column.
    Mat hidden_features(const Mat& x) const;

  private:
    std::vector<Mat> weights_;
    std::vector<Vec> biases_;
};

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    Index max_epochs = 20000;
    // Training stops once the best loss fails to improve by more than
    // `tolerance` for `patience` consecutive epochs.
    double tolerance = 1e-10;
    Index patience = 500;
};

struct TrainReport {
    Index epochs = 0;
    double final_loss = 0.0;
};

// Full-batch Adam on the summed squared error over all columns of (x, y).
// Throws TrainingFailure when the loss becomes non-finite.
TrainReport train_adam(Mlp& net, const Mat& x, const Mat& y, const AdamOptions& options);

// Sum of squared entries of (net(x) - y).
double sum_squared_loss(const Mlp& net, const Mat& x, const Mat& y);

// Gradient of the summed squared loss with respect to every weight and bias,
// returned in layer order as (dW, db) pairs. Used by training and exposed for
// verification against finite differences.
struct LossGradients {
    std::vector<Mat> d_weights;
    std::vector<Vec> d_biases;
};
LossGradients loss_gradients(const Mlp& net, const Mat& x, const Mat& y);

// --- last-layer retraining -------------------------------------------------

enum class UnderdeterminedPolicy {
    reject,      // fewer samples than unknowns is an error
    min_change,  // resolve with the minimum-Frobenius-norm parameter update
};

// One compressed residual constraint block: rows enforce ra * Theta * z = c,
// where Theta = [W_last | b_last] and z is the augmented feature vector of one
// control realization.
struct ResidualBlock {
    Mat ra;  // (m x n_out)
    Vec c;   // (m)
    Vec z;   // (last_layer_width + 1)
};

struct RetrainOptions {
    double lambda_r = 1e-4;  // weight of the residual rows in the combined fit
    UnderdeterminedPolicy policy = UnderdeterminedPolicy::reject;
};

// Residual rows reduced to the vectorized last-layer unknowns: a * vec(Theta)
// = b with vec stacking the columns of Theta = [W | b]. Produced once from a
// set of residual blocks and reused across retrains with different data.
struct CompressedPhysics {
    Mat a;
    Vec b;
    Index n_out = 0;
    Index width = 0;  // last_layer_width() + 1
};
CompressedPhysics compress_physics_rows(const std::vector<ResidualBlock>& blocks,
                                        Index n_out,
                                        Index width);

// Refit the final linear layer of `net`.
//  - data-only (physics == nullptr): least squares on (features, targets);
//    with fewer samples than last_layer_width()+1 the policy decides between
//    rejection and the minimum-change update.
//  - physics-only (no data columns): solves the stacked residual rows.
//  - combined: residual rows are weighted by sqrt(lambda_r) against the data.
// `features` holds raw hidden features (one column per sample); the bias
// column is appended internally. Returns the number of rows in the solve.
Index retrain_last_layer(Mlp& net,
                         const Mat* features,
                         const Mat* targets,
                         const CompressedPhysics* physics,
                         const RetrainOptions& options);
Index retrain_last_layer(Mlp& net,
                         const Mat* features,
                         const Mat* targets,
                         const std::vector<ResidualBlock>* physics,
                         const RetrainOptions& options);

// Accessors for the stacked last-layer parameters Theta = [W | b].
Mat last_layer_matrix(const Mlp& net);
void set_last_layer(Mlp& net, const Mat& theta);

}  // namespace kltwin
