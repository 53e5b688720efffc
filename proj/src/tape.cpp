#include "gpr/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gpr::autodiff {

int Tape::push(Matrix value, std::function<void(Tape&)> back) {
    Node n;
    n.grad = Matrix::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return (int)nodes_.size() - 1;
}

int Tape::constant(Matrix value) { return push(std::move(value)); }

int Tape::param(const Matrix* p) {
    int id = push(*p);
    nodes_[id].bound = p;
    return id;
}

int Tape::matmul(int a, int b) {
    int out = push(value(a) * value(b));
    nodes_[out].back = [a, b, out](Tape& t) {
        t.grad(a) += t.grad(out) * t.value(b).transpose();
        t.grad(b) += t.value(a).transpose() * t.grad(out);
    };
    return out;
}

int Tape::add(int a, int b) {
    int out = push(value(a) + value(b));
    nodes_[out].back = [a, b, out](Tape& t) {
        t.grad(a) += t.grad(out);
        t.grad(b) += t.grad(out);
    };
    return out;
}

int Tape::scale(int a, double s) {
    int out = push(value(a) * s);
    nodes_[out].back = [a, s, out](Tape& t) { t.grad(a) += t.grad(out) * s; };
    return out;
}

int Tape::add_rowvec(int a, int bias) {
    Matrix v = value(a);
    v.rowwise() += value(bias).row(0);
    int out = push(std::move(v));
    nodes_[out].back = [a, bias, out](Tape& t) {
        t.grad(a) += t.grad(out);
        t.grad(bias) += t.grad(out).colwise().sum();
    };
    return out;
}

int Tape::transpose(int a) {
    int out = push(value(a).transpose());
    nodes_[out].back = [a, out](Tape& t) { t.grad(a) += t.grad(out).transpose(); };
    return out;
}

int Tape::slice_cols(int a, int start, int len) {
    int out = push(value(a).middleCols(start, len));
    nodes_[out].back = [a, start, len, out](Tape& t) {
        t.grad(a).middleCols(start, len) += t.grad(out);
    };
    return out;
}

int Tape::concat_cols(int a, int b) {
    Matrix v(value(a).rows(), value(a).cols() + value(b).cols());
    v << value(a), value(b);
    int out = push(std::move(v));
    const int ca = (int)value(a).cols();
    nodes_[out].back = [a, b, ca, out](Tape& t) {
        t.grad(a) += t.grad(out).leftCols(ca);
        t.grad(b) += t.grad(out).rightCols(t.grad(out).cols() - ca);
    };
    return out;
}

int Tape::gather_cols(int a, const Eigen::MatrixXi& idx) {
    Matrix v(idx.rows(), idx.cols());
    for (int i = 0; i < idx.rows(); ++i)
        for (int j = 0; j < idx.cols(); ++j) v(i, j) = value(a)(i, idx(i, j));
    int out = push(std::move(v));
    nodes_[out].back = [a, idx, out](Tape& t) {
        for (int i = 0; i < idx.rows(); ++i)
            for (int j = 0; j < idx.cols(); ++j)
                t.grad(a)(i, idx(i, j)) += t.grad(out)(i, j);
    };
    return out;
}

int Tape::gather_rows(int a, const std::vector<int>& rows) {
    Matrix v((int)rows.size(), value(a).cols());
    for (int i = 0; i < (int)rows.size(); ++i) v.row(i) = value(a).row(rows[i]);
    int out = push(std::move(v));
    nodes_[out].back = [a, rows, out](Tape& t) {
        for (int i = 0; i < (int)rows.size(); ++i)
            t.grad(a).row(rows[i]) += t.grad(out).row(i);
    };
    return out;
}

int Tape::softmax_rows_masked(int a, const Matrix& mask) {
    const Matrix& x = value(a);
    Matrix v = Matrix::Zero(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < x.cols(); ++j)
            if (mask(i, j) != 0) mx = std::max(mx, x(i, j));
        if (!std::isfinite(mx)) continue;  // fully masked row stays zero
        double sum = 0;
        for (int j = 0; j < x.cols(); ++j) {
            if (mask(i, j) != 0) {
                v(i, j) = std::exp(x(i, j) - mx);
                sum += v(i, j);
            }
        }
        for (int j = 0; j < x.cols(); ++j) v(i, j) /= sum;
    }
    int out = push(std::move(v));
    nodes_[out].back = [a, out](Tape& t) {
        const Matrix& s = t.value(out);
        const Matrix& g = t.grad(out);
        for (int i = 0; i < s.rows(); ++i) {
            const double dot = (g.row(i).array() * s.row(i).array()).sum();
            t.grad(a).row(i).array() +=
                s.row(i).array() * (g.row(i).array() - dot);
        }
    };
    return out;
}

int Tape::mean_rows(int a) {
    const int n = (int)value(a).rows();
    int out = push(value(a).colwise().mean());
    nodes_[out].back = [a, n, out](Tape& t) {
        t.grad(a).rowwise() += (t.grad(out) / n).row(0);
    };
    return out;
}

int Tape::max_rows(int a) {
    const Matrix& x = value(a);
    Matrix v(1, x.cols());
    std::vector<int> arg((std::size_t)x.cols());
    for (int j = 0; j < x.cols(); ++j) {
        int best = 0;
        for (int i = 1; i < x.rows(); ++i)
            if (x(i, j) > x(best, j)) best = i;
        arg[j] = best;
        v(0, j) = x(best, j);
    }
    int out = push(std::move(v));
    nodes_[out].back = [a, arg, out](Tape& t) {
        for (int j = 0; j < (int)arg.size(); ++j)
            t.grad(a)(arg[j], j) += t.grad(out)(0, j);
    };
    return out;
}

int Tape::l2_normalize_row(int a) {
    const Matrix& x = value(a);
    const double norm = std::max(x.norm(), 1e-12);
    int out = push(x / norm);
    nodes_[out].back = [a, norm, out](Tape& t) {
        const Matrix& y = t.value(out);  // x / norm
        const Matrix& g = t.grad(out);
        const double dot = (g.array() * y.array()).sum();
        t.grad(a) += (g - dot * y) / norm;
    };
    return out;
}

int Tape::dot_rows(int a, int b) {
    Matrix v(1, 1);
    v(0, 0) = (value(a).array() * value(b).array()).sum();
    int out = push(std::move(v));
    nodes_[out].back = [a, b, out](Tape& t) {
        const double g = t.grad(out)(0, 0);
        t.grad(a) += g * t.value(b);
        t.grad(b) += g * t.value(a);
    };
    return out;
}

int Tape::tanh_op(int a) {
    int out = push(value(a).array().tanh().matrix());
    nodes_[out].back = [a, out](Tape& t) {
        t.grad(a).array() +=
            t.grad(out).array() * (1.0 - t.value(out).array().square());
    };
    return out;
}

int Tape::sigmoid(int a) {
    int out = push((1.0 / (1.0 + (-value(a)).array().exp())).matrix());
    nodes_[out].back = [a, out](Tape& t) {
        t.grad(a).array() += t.grad(out).array() * t.value(out).array() *
                             (1.0 - t.value(out).array());
    };
    return out;
}

int Tape::one_minus(int a) {
    int out = push((1.0 - value(a).array()).matrix());
    nodes_[out].back = [a, out](Tape& t) { t.grad(a) -= t.grad(out); };
    return out;
}

int Tape::hinge(int a, double margin) {
    int out = push((value(a).array() - margin).max(0.0).matrix());
    nodes_[out].back = [a, margin, out](Tape& t) {
        t.grad(a).array() += t.grad(out).array() *
                             (t.value(a).array() > margin).cast<double>();
    };
    return out;
}

int Tape::bce_with_logit(int z, double target) {
    // -(y log p + (1-y) log(1-p)) = max(z,0) - y z + log(1 + exp(-|z|))
    const double zv = value(z)(0, 0);
    Matrix v(1, 1);
    v(0, 0) = std::max(zv, 0.0) - target * zv + std::log1p(std::exp(-std::fabs(zv)));
    int out = push(std::move(v));
    nodes_[out].back = [z, target, out](Tape& t) {
        const double zv = t.value(z)(0, 0);
        const double p = 1.0 / (1.0 + std::exp(-zv));
        t.grad(z)(0, 0) += t.grad(out)(0, 0) * (p - target);
    };
    return out;
}

void Tape::backward(int output) {
    if (value(output).rows() != 1 || value(output).cols() != 1)
        throw std::logic_error("backward requires a scalar output");
    grad(output)(0, 0) = 1.0;
    for (int i = (int)nodes_.size() - 1; i >= 0; --i) {
        if (nodes_[i].back) nodes_[i].back(*this);
        if (nodes_[i].bound) {
            auto [it, inserted] = param_grads_.try_emplace(
                nodes_[i].bound, nodes_[i].grad);
            if (!inserted) it->second += nodes_[i].grad;
        }
    }
}

}  // namespace gpr::autodiff
