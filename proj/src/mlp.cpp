#include "kltwin/mlp.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/QR>

namespace kltwin {

void MlpShape::validate() const {
    if (n_in <= 0 || n_out <= 0) {
        throw InvalidArgument("mlp shape requires positive input and output widths");
    }
    for (Index w : hidden) {
        if (w <= 0) {
            throw InvalidArgument("mlp hidden widths must be positive");
        }
    }
}

Mlp::Mlp(const MlpShape& shape, RngStream& rng) {
    shape.validate();
    std::vector<Index> widths;
    widths.push_back(shape.n_in);
    widths.insert(widths.end(), shape.hidden.begin(), shape.hidden.end());
    widths.push_back(shape.n_out);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const Index fan_in = widths[l];
        const Index fan_out = widths[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Mat w(fan_out, fan_in);
        for (Index j = 0; j < fan_in; ++j) {
            for (Index i = 0; i < fan_out; ++i) {
                w(i, j) = rng.uniform(-bound, bound);
            }
        }
        weights_.push_back(std::move(w));
        biases_.push_back(Vec::Zero(fan_out));
    }
}

Mat Mlp::apply_columns(const Mat& x) const {
    if (x.rows() != n_in()) {
        throw InvalidArgument("mlp input has " + std::to_string(x.rows()) + " rows, expected " +
                              std::to_string(n_in()));
    }
    Mat z = x;
    const Index n = n_layers();
    for (Index l = 0; l < n; ++l) {
        Mat a = (weights_[static_cast<std::size_t>(l)] * z).colwise() +
                biases_[static_cast<std::size_t>(l)];
        if (l + 1 < n) {
            z = a.array().tanh().matrix();
        } else {
            z = std::move(a);
        }
    }
    return z;
}

Vec Mlp::apply(const Vec& x) const { return apply_columns(x); }

Mat Mlp::hidden_features(const Mat& x) const {
    if (x.rows() != n_in()) {
        throw InvalidArgument("mlp input has " + std::to_string(x.rows()) + " rows, expected " +
                              std::to_string(n_in()));
    }
    Mat z = x;
    const Index n = n_layers();
    for (Index l = 0; l + 1 < n; ++l) {
        z = ((weights_[static_cast<std::size_t>(l)] * z).colwise() +
             biases_[static_cast<std::size_t>(l)])
                .array()
                .tanh()
                .matrix();
    }
    return z;
}

namespace {

struct ForwardPass {
    std::vector<Mat> activations;  // activations[l] feeds layer l; back() is the output
};

ForwardPass forward(const Mlp& net, const Mat& x) {
    ForwardPass pass;
    pass.activations.reserve(static_cast<std::size_t>(net.n_layers()) + 1);
    pass.activations.push_back(x);
    const Index n = net.n_layers();
    for (Index l = 0; l < n; ++l) {
        Mat a = (net.weight(l) * pass.activations.back()).colwise() + net.bias(l);
        if (l + 1 < n) {
            pass.activations.push_back(a.array().tanh().matrix());
        } else {
            pass.activations.push_back(std::move(a));
        }
    }
    return pass;
}

}  // namespace

double sum_squared_loss(const Mlp& net, const Mat& x, const Mat& y) {
    return (net.apply_columns(x) - y).squaredNorm();
}

LossGradients loss_gradients(const Mlp& net, const Mat& x, const Mat& y) {
    if (y.rows() != net.n_out() || y.cols() != x.cols()) {
        throw InvalidArgument("training targets must be (n_out x n_samples)");
    }
    const ForwardPass pass = forward(net, x);
    const Index n = net.n_layers();
    LossGradients grads;
    grads.d_weights.resize(static_cast<std::size_t>(n));
    grads.d_biases.resize(static_cast<std::size_t>(n));
    Mat dz = 2.0 * (pass.activations.back() - y);
    for (Index l = n - 1; l >= 0; --l) {
        const Mat& input = pass.activations[static_cast<std::size_t>(l)];
        grads.d_weights[static_cast<std::size_t>(l)] = dz * input.transpose();
        grads.d_biases[static_cast<std::size_t>(l)] = dz.rowwise().sum();
        if (l > 0) {
            dz = (net.weight(l).transpose() * dz).cwiseProduct(
                (1.0 - input.array().square()).matrix());
        }
    }
    return grads;
}

TrainReport train_adam(Mlp& net, const Mat& x, const Mat& y, const AdamOptions& options) {
    const Index n = net.n_layers();
    std::vector<Mat> mw(static_cast<std::size_t>(n)), vw(static_cast<std::size_t>(n));
    std::vector<Vec> mb(static_cast<std::size_t>(n)), vb(static_cast<std::size_t>(n));
    for (Index l = 0; l < n; ++l) {
        mw[static_cast<std::size_t>(l)] = Mat::Zero(net.weight(l).rows(), net.weight(l).cols());
        vw[static_cast<std::size_t>(l)] = Mat::Zero(net.weight(l).rows(), net.weight(l).cols());
        mb[static_cast<std::size_t>(l)] = Vec::Zero(net.bias(l).size());
        vb[static_cast<std::size_t>(l)] = Vec::Zero(net.bias(l).size());
    }
    double best = std::numeric_limits<double>::infinity();
    Index best_epoch = 0;
    TrainReport report;
    double beta1_t = 1.0;
    double beta2_t = 1.0;
    for (Index epoch = 0; epoch < options.max_epochs; ++epoch) {
        const ForwardPass pass = forward(net, x);
        const double loss = (pass.activations.back() - y).squaredNorm();
        if (!std::isfinite(loss)) {
            throw TrainingFailure("training loss became non-finite at epoch " +
                                  std::to_string(epoch));
        }
        report.final_loss = loss;
        report.epochs = epoch + 1;
        if (loss < best - options.tolerance) {
            best = loss;
            best_epoch = epoch;
        } else if (epoch - best_epoch >= options.patience) {
            break;
        }
        // Backward pass (shares the forward activations computed above).
        Mat dz = 2.0 * (pass.activations.back() - y);
        beta1_t *= options.beta1;
        beta2_t *= options.beta2;
        for (Index l = n - 1; l >= 0; --l) {
            const Mat& input = pass.activations[static_cast<std::size_t>(l)];
            const Mat dw = dz * input.transpose();
            const Vec db = dz.rowwise().sum();
            if (l > 0) {
                dz = (net.weight(l).transpose() * dz).cwiseProduct(
                    (1.0 - input.array().square()).matrix());
            }
            auto& mwl = mw[static_cast<std::size_t>(l)];
            auto& vwl = vw[static_cast<std::size_t>(l)];
            auto& mbl = mb[static_cast<std::size_t>(l)];
            auto& vbl = vb[static_cast<std::size_t>(l)];
            mwl = options.beta1 * mwl + (1.0 - options.beta1) * dw;
            vwl = options.beta2 * vwl + (1.0 - options.beta2) * dw.cwiseProduct(dw);
            mbl = options.beta1 * mbl + (1.0 - options.beta1) * db;
            vbl = options.beta2 * vbl + (1.0 - options.beta2) * db.cwiseProduct(db);
            const double step = options.learning_rate;
            net.weight(l).array() -=
                step * (mwl.array() / (1.0 - beta1_t)) /
                ((vwl.array() / (1.0 - beta2_t)).sqrt() + options.epsilon);
            net.bias(l).array() -=
                step * (mbl.array() / (1.0 - beta1_t)) /
                ((vbl.array() / (1.0 - beta2_t)).sqrt() + options.epsilon);
        }
    }
    return report;
}

Mat last_layer_matrix(const Mlp& net) {
    const Index last = net.n_layers() - 1;
    Mat theta(net.n_out(), net.last_layer_width() + 1);
    theta.leftCols(net.last_layer_width()) = net.weight(last);
    theta.col(net.last_layer_width()) = net.bias(last);
    return theta;
}

void set_last_layer(Mlp& net, const Mat& theta) {
    const Index last = net.n_layers() - 1;
    if (theta.rows() != net.n_out() || theta.cols() != net.last_layer_width() + 1) {
        throw InvalidArgument("last-layer matrix has the wrong shape");
    }
    net.weight(last) = theta.leftCols(net.last_layer_width());
    net.bias(last) = theta.col(net.last_layer_width());
}

CompressedPhysics compress_physics_rows(const std::vector<ResidualBlock>& blocks,
                                        Index n_out,
                                        Index width) {
    Index physics_rows = 0;
    for (const ResidualBlock& block : blocks) {
        if (block.ra.cols() != n_out || block.c.size() != block.ra.rows() ||
            block.z.size() != width) {
            throw InvalidArgument("residual block dimensions do not match the last layer");
        }
        physics_rows += block.ra.rows();
    }
    if (physics_rows == 0) {
        throw InvalidArgument("cannot compress an empty residual block set");
    }
    const Index unknowns = width * n_out;
    Mat a(physics_rows, unknowns);
    Vec b(physics_rows);
    Index row = 0;
    for (const ResidualBlock& block : blocks) {
        const Index m = block.ra.rows();
        for (Index j = 0; j < width; ++j) {
            a.block(row, j * n_out, m, n_out) = block.z[j] * block.ra;
        }
        b.segment(row, m) = block.c;
        row += m;
    }
    CompressedPhysics compressed;
    compressed.n_out = n_out;
    compressed.width = width;
    if (physics_rows <= unknowns) {
        compressed.a = std::move(a);
        compressed.b = std::move(b);
        return compressed;
    }
    // Reduce the tall stack to its triangular factor so later retrains solve
    // against `unknowns` rows instead of the full stack.
    Eigen::HouseholderQR<Mat> qr(a);
    Mat r = qr.matrixQR().topRows(unknowns).triangularView<Eigen::Upper>();
    Vec qtb = (qr.householderQ().transpose() * b).head(unknowns);
    compressed.a = std::move(r);
    compressed.b = std::move(qtb);
    return compressed;
}

Index retrain_last_layer(Mlp& net,
                         const Mat* features,
                         const Mat* targets,
                         const CompressedPhysics* physics,
                         const RetrainOptions& options) {
    const Index width = net.last_layer_width() + 1;  // unknown columns of Theta
    const Index n_out = net.n_out();
    const Index n_data = (features != nullptr) ? features->cols() : 0;
    const bool have_physics = physics != nullptr && physics->a.rows() > 0;
    if (n_data > 0) {
        if (targets == nullptr || targets->cols() != n_data || targets->rows() != n_out) {
            throw InvalidArgument("retraining targets must be (n_out x n_samples)");
        }
        if (features->rows() != net.last_layer_width()) {
            throw InvalidArgument("retraining features must match the last-layer width");
        }
    }
    if (!have_physics && n_data == 0) {
        throw InvalidArgument("last-layer retraining needs data samples, residual rows, or both");
    }

    if (!have_physics) {
        // Pure data fit, formulated as a minimum-change update of Theta so the
        // underdetermined few-shot case stays anchored at the trained layer.
        if (n_data < width && options.policy == UnderdeterminedPolicy::reject) {
            throw DecompositionFailure(
                "last-layer data retraining with " + std::to_string(n_data) + " samples: " +
                std::to_string(width) + " samples are needed to find a unique solution");
        }
        Mat z_aug(width, n_data);
        z_aug.topRows(net.last_layer_width()) = *features;
        z_aug.bottomRows(1).setOnes();
        const Mat theta_s = last_layer_matrix(net);
        const Mat residual = *targets - theta_s * z_aug;  // (n_out x n_data)
        // delta * z_aug = residual, minimum-Frobenius-norm delta.
        Eigen::CompleteOrthogonalDecomposition<Mat> cod(z_aug.transpose());
        const Mat delta_t = cod.solve(residual.transpose());  // (width x n_out)
        set_last_layer(net, theta_s + delta_t.transpose());
        return n_data * n_out;
    }

    if (physics->n_out != n_out || physics->width != width) {
        throw InvalidArgument("compressed residual rows do not match the last layer");
    }
    // Physics rows (optionally combined with data rows) solve for the full
    // Theta via its column-major vectorization: ra * Theta * z = c becomes
    // (z^T kron ra) vec(Theta) = c.
    const double physics_scale = (n_data > 0) ? std::sqrt(options.lambda_r) : 1.0;
    const Index physics_rows = physics->a.rows();
    const Index data_rows = n_data * n_out;
    Mat a(physics_rows + data_rows, width * n_out);
    Vec b(physics_rows + data_rows);
    a.topRows(physics_rows) = physics_scale * physics->a;
    b.head(physics_rows) = physics_scale * physics->b;
    a.bottomRows(data_rows).setZero();
    Index row = physics_rows;
    for (Index s = 0; s < n_data; ++s) {
        Vec z_aug(width);
        z_aug.head(net.last_layer_width()) = features->col(s);
        z_aug[width - 1] = 1.0;
        for (Index j = 0; j < width; ++j) {
            a.block(row, j * n_out, n_out, n_out).diagonal().setConstant(z_aug[j]);
        }
        b.segment(row, n_out) = targets->col(s);
        row += n_out;
    }
    const Index unknowns = width * n_out;
    if (physics_rows + data_rows < unknowns && options.policy == UnderdeterminedPolicy::reject) {
        throw DecompositionFailure(
            "last-layer retraining with " + std::to_string(physics_rows + data_rows) +
            " rows: " + std::to_string(unknowns) + " rows are needed to find a unique solution");
    }
    // Solve for the correction to the trained layer instead of the layer
    // itself: rank-deficient stacks stay anchored at the trained weights,
    // and full-rank stacks reach the same least-squares optimum.
    const Mat theta_s = last_layer_matrix(net);
    Vec vec_theta(unknowns);
    for (Index j = 0; j < width; ++j) {
        vec_theta.segment(j * n_out, n_out) = theta_s.col(j);
    }
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(a);
    vec_theta += cod.solve(b - a * vec_theta);
    Mat theta(n_out, width);
    for (Index j = 0; j < width; ++j) {
        theta.col(j) = vec_theta.segment(j * n_out, n_out);
    }
    set_last_layer(net, theta);
    return row;
}

Index retrain_last_layer(Mlp& net,
                         const Mat* features,
                         const Mat* targets,
                         const std::vector<ResidualBlock>* physics,
                         const RetrainOptions& options) {
    if (physics == nullptr || physics->empty()) {
        return retrain_last_layer(net, features, targets,
                                  static_cast<const CompressedPhysics*>(nullptr), options);
    }
    const CompressedPhysics compressed =
        compress_physics_rows(*physics, net.n_out(), net.last_layer_width() + 1);
    return retrain_last_layer(net, features, targets, &compressed, options);
}

}  // namespace kltwin
