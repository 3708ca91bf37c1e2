#include "xel/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "xel/errors.hpp"

namespace xel {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap view(std::span<const double> d, std::size_t r, std::size_t c) {
  return ConstMap(d.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MutMap view(std::span<double> d, std::size_t r, std::size_t c) {
  return MutMap(d.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() > 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Grad accumulator for an input, or nullptr when it does not need one.
double* grad_of(const std::shared_ptr<detail::Storage>& s) {
  return s->requires_grad ? s->grad_buffer().data() : nullptr;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t p = a.rows(), q = a.cols(), s = b.cols();
  if (b.rows() != q) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  auto out = Tensor::zeros({p, s});
  view(out.data(), p, s).noalias() = view(a.data(), p, q) * view(b.data(), q, s);
  if (tape.wants({&a, &b})) {
    auto sa = a.storage_ptr(), sb = b.storage_ptr();
    tape.record(out, [sa, sb, p, q, s](std::span<const double> g) {
      auto gm = view(g, p, s);
      if (double* ga = grad_of(sa)) {
        MutMap(ga, p, q).noalias() += gm * view(std::span<const double>(sb->value), q, s).transpose();
      }
      if (double* gb = grad_of(sb)) {
        MutMap(gb, q, s).noalias() += view(std::span<const double>(sa->value), p, q).transpose() * gm;
      }
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto out = Tensor::zeros(a.shape());
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (tape.wants({&a, &b})) {
    auto sa = a.storage_ptr(), sb = b.storage_ptr();
    tape.record(out, [sa, sb](std::span<const double> g) {
      for (const auto& s : {sa, sb}) {
        if (double* gx = grad_of(s))
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  auto out = Tensor::zeros(a.shape());
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = factor * x[i];
  if (tape.wants({&a})) {
    auto sa = a.storage_ptr();
    tape.record(out, [sa, factor](std::span<const double> g) {
      double* gx = grad_of(sa);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
    });
  }
  return out;
}

Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  auto out = Tensor::zeros(a.shape());
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (tape.wants({&a, &b})) {
    auto sa = a.storage_ptr(), sb = b.storage_ptr();
    tape.record(out, [sa, sb](std::span<const double> g) {
      if (double* ga = grad_of(sa))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sb->value[i];
      if (double* gb = grad_of(sb))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * sa->value[i];
    });
  }
  return out;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const std::size_t d = x.rows(), t = x.cols();
  if (bias.size() != d || bias.cols() != 1) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match rows of " +
                         shape_string(x.shape()));
  }
  auto out = Tensor::zeros(x.shape());
  auto o = out.data();
  auto xv = x.data(), bv = bias.data();
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < t; ++c) o[r * t + c] = xv[r * t + c] + bv[r];
  if (tape.wants({&x, &bias})) {
    auto sx = x.storage_ptr(), sb = bias.storage_ptr();
    tape.record(out, [sx, sb, d, t](std::span<const double> g) {
      if (double* gx = grad_of(sx))
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      if (double* gb = grad_of(sb)) {
        for (std::size_t r = 0; r < d; ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < t; ++c) acc += g[r * t + c];
          gb[r] += acc;
        }
      }
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  auto out = Tensor::zeros(x.shape());
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (tape.wants({&x})) {
    auto sx = x.storage_ptr();
    tape.record(out, [sx](std::span<const double> g) {
      double* gx = grad_of(sx);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (sx->value[i] > 0.0) gx[i] += g[i];
    });
  }
  return out;
}

Tensor softmax(Tape& tape, const Tensor& x, int axis) {
  require_matrix(x, "softmax");
  if (axis != 0 && axis != 1) throw DimensionError("softmax: axis must be 0 or 1");
  if (x.rank() == 1 && axis != 0) throw DimensionError("softmax: rank-1 input only has axis 0");
  const std::size_t rows = x.rows(), cols = x.cols();
  // Normalize groups of `len` entries spaced `stride` apart.
  const std::size_t groups = axis == 0 ? cols : rows;
  const std::size_t len = axis == 0 ? rows : cols;
  const std::size_t stride = axis == 0 ? cols : 1;
  const std::size_t group_step = axis == 0 ? 1 : cols;

  auto out = Tensor::zeros(x.shape());
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t base = gi * group_step;
    double mx = xv[base];
    for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[base + k * stride]);
    double total = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double e = std::exp(xv[base + k * stride] - mx);
      o[base + k * stride] = e;
      total += e;
    }
    for (std::size_t k = 0; k < len; ++k) o[base + k * stride] /= total;
  }
  if (tape.wants({&x})) {
    auto sx = x.storage_ptr(), so = out.storage_ptr();
    std::weak_ptr<detail::Storage> weak_out = so;
    tape.record(out, [sx, weak_out, groups, len, stride, group_step](std::span<const double> g) {
      auto so = weak_out.lock();
      double* gx = grad_of(sx);
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const std::size_t base = gi * group_step;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += g[base + k * stride] * so->value[base + k * stride];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * stride;
          gx[i] += so->value[i] * (g[i] - dot);
        }
      }
    });
  }
  return out;
}

Tensor concat_embed(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_embed: no parts");
  const std::size_t t = parts[0].cols();
  std::size_t total_rows = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_embed");
    if (p.cols() != t) {
      throw DimensionError("concat_embed: token counts differ, " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    }
    total_rows += p.rows();
  }
  auto out = Tensor::zeros({total_rows, t});
  auto o = out.data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), o.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.size();
  }
  if (tape.wants(parts)) {
    std::vector<std::shared_ptr<detail::Storage>> inputs;
    for (const auto& p : parts) inputs.push_back(p.storage_ptr());
    tape.record(out, [inputs](std::span<const double> g) {
      std::size_t offset = 0;
      for (const auto& s : inputs) {
        const std::size_t n = s->value.size();
        if (double* gx = grad_of(s))
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[offset + i];
        offset += n;
      }
    });
  }
  return out;
}

Tensor concat_columns(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_columns: no parts");
  const std::size_t d = parts[0].rows();
  std::size_t total_cols = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_columns");
    if (p.rows() != d) {
      throw DimensionError("concat_columns: embedding sizes differ, " +
                           shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    }
    total_cols += p.cols();
  }
  auto out = Tensor::zeros({d, total_cols});
  auto o = out.data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t t = p.cols();
    auto pv = p.data();
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < t; ++c) o[r * total_cols + offset + c] = pv[r * t + c];
    offset += t;
  }
  if (tape.wants(parts)) {
    std::vector<std::shared_ptr<detail::Storage>> inputs;
    for (const auto& p : parts) inputs.push_back(p.storage_ptr());
    tape.record(out, [inputs, d, total_cols](std::span<const double> g) {
      std::size_t offset = 0;
      for (const auto& s : inputs) {
        const std::size_t t = s->value.size() / d;
        if (double* gx = grad_of(s))
          for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < t; ++c) gx[r * t + c] += g[r * total_cols + offset + c];
        offset += t;
      }
    });
  }
  return out;
}

Tensor select_columns(Tape& tape, const Tensor& x, std::span<const std::size_t> columns) {
  require_matrix(x, "select_columns");
  if (columns.empty()) throw DimensionError("select_columns: empty selection");
  const std::size_t d = x.rows(), t = x.cols(), n = columns.size();
  for (auto c : columns) {
    if (c >= t) {
      throw DimensionError("select_columns: column " + std::to_string(c) + " out of range for " +
                           shape_string(x.shape()));
    }
  }
  auto out = Tensor::zeros({d, n});
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t j = 0; j < n; ++j) o[r * n + j] = xv[r * t + columns[j]];
  if (tape.wants({&x})) {
    auto sx = x.storage_ptr();
    std::vector<std::size_t> idx(columns.begin(), columns.end());
    tape.record(out, [sx, idx = std::move(idx), d, t](std::span<const double> g) {
      double* gx = grad_of(sx);
      const std::size_t n = idx.size();
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t j = 0; j < n; ++j) gx[r * t + idx[j]] += g[r * n + j];
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  auto out = Tensor::scalar(acc);
  if (tape.wants({&x})) {
    auto sx = x.storage_ptr();
    tape.record(out, [sx](std::span<const double> g) {
      double* gx = grad_of(sx);
      for (std::size_t i = 0; i < sx->value.size(); ++i) gx[i] += g[0];
    });
  }
  return out;
}

Tensor mean_squared_error(Tape& tape, const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mean_squared_error");
  const auto p = pred.data(), y = target.data();
  const double n = static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - y[i]) * (p[i] - y[i]);
  auto out = Tensor::scalar(acc / n);
  if (tape.wants({&pred})) {
    auto sp = pred.storage_ptr(), sy = target.storage_ptr();
    tape.record(out, [sp, sy, n](std::span<const double> g) {
      double* gp = grad_of(sp);
      const double k = 2.0 * g[0] / n;
      for (std::size_t i = 0; i < sp->value.size(); ++i) gp[i] += k * (sp->value[i] - sy->value[i]);
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::size_t> targets) {
  require_matrix(logits, "cross_entropy");
  const std::size_t k = logits.rows(), n = logits.cols();
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " logit columns");
  }
  for (auto c : targets) {
    if (c >= k) {
      throw DomainError("cross_entropy: class index " + std::to_string(c) + " >= " + std::to_string(k));
    }
  }
  auto lv = logits.data();
  std::vector<double> probs(k * n);
  double loss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double mx = lv[j];
    for (std::size_t r = 1; r < k; ++r) mx = std::max(mx, lv[r * n + j]);
    double total = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
      probs[r * n + j] = std::exp(lv[r * n + j] - mx);
      total += probs[r * n + j];
    }
    for (std::size_t r = 0; r < k; ++r) probs[r * n + j] /= total;
    loss += -(lv[targets[j] * n + j] - mx - std::log(total));
  }
  auto out = Tensor::scalar(loss / static_cast<double>(n));
  if (tape.wants({&logits})) {
    auto sl = logits.storage_ptr();
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    tape.record(out, [sl, probs = std::move(probs), tgt = std::move(tgt), k, n](std::span<const double> g) {
      double* gl = grad_of(sl);
      const double w = g[0] / static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t r = 0; r < k; ++r)
          gl[r * n + j] += w * (probs[r * n + j] - (r == tgt[j] ? 1.0 : 0.0));
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t d = x.rows(), t = x.cols();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(d) + " entries");
  }
  auto xv = x.data(), gv = gain.data(), bv = bias.data();
  std::vector<double> normed(d * t), inv_std(t);
  auto out = Tensor::zeros(x.shape());
  auto o = out.data();
  for (std::size_t c = 0; c < t; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < d; ++r) mean += xv[r * t + c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t r = 0; r < d; ++r) var += (xv[r * t + c] - mean) * (xv[r * t + c] - mean);
    var /= static_cast<double>(d);
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t r = 0; r < d; ++r) {
      const std::size_t i = r * t + c;
      normed[i] = (xv[i] - mean) * inv_std[c];
      o[i] = gv[r] * normed[i] + bv[r];
    }
  }
  if (tape.wants({&x, &gain, &bias})) {
    auto sx = x.storage_ptr(), sg = gain.storage_ptr(), sb = bias.storage_ptr();
    tape.record(out, [sx, sg, sb, normed = std::move(normed), inv_std = std::move(inv_std), d,
                      t](std::span<const double> g) {
      double* gg = grad_of(sg);
      double* gb = grad_of(sb);
      double* gx = grad_of(sx);
      const double dn = static_cast<double>(d);
      for (std::size_t c = 0; c < t; ++c) {
        double sum_g = 0.0, sum_gn = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
          const std::size_t i = r * t + c;
          const double gy = g[i] * sg->value[r];  // dL/d normed
          sum_g += gy;
          sum_gn += gy * normed[i];
          if (gg) gg[r] += g[i] * normed[i];
          if (gb) gb[r] += g[i];
        }
        if (gx) {
          for (std::size_t r = 0; r < d; ++r) {
            const std::size_t i = r * t + c;
            const double gy = g[i] * sg->value[r];
            gx[i] += inv_std[c] * (gy - sum_g / dn - normed[i] * sum_gn / dn);
          }
        }
      }
    });
  }
  return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw DomainError("dropout: probability must be in [0, 1)");
  if (p == 0.0) return x;
  const double keep = 1.0 - p;
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  auto out = Tensor::zeros(x.shape());
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * mask[i];
  if (tape.wants({&x})) {
    auto sx = x.storage_ptr();
    tape.record(out, [sx, mask = std::move(mask)](std::span<const double> g) {
      double* gx = grad_of(sx);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
  }
  return out;
}

Tensor attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::size_t q_len, std::size_t k_len, double score_scale) {
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  if (heads == 0 || q_len == 0 || k_len == 0) throw DimensionError("attention: empty heads or sequence");
  const std::size_t rows = q.rows();
  if (rows % heads != 0) throw DimensionError("attention: rows not divisible by head count");
  if (k.shape() != v.shape() || k.rows() != rows) {
    throw DimensionError("attention: q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) +
                         ", v " + shape_string(v.shape()) + " are incompatible");
  }
  if (q.cols() % q_len != 0 || k.cols() % k_len != 0 || q.cols() / q_len != k.cols() / k_len) {
    throw DimensionError("attention: column counts do not split into the same batch");
  }
  const std::size_t e = rows / heads;
  const std::size_t batch = q.cols() / q_len;
  const std::size_t qc = q.cols(), kc = k.cols();

  auto out = Tensor::zeros(q.shape());
  auto o = out.data();
  auto qv = q.data(), kv = k.data(), vv = v.data();
  // probs[(b * heads + h) * k_len * q_len + key * q_len + query]
  std::vector<double> probs(batch * heads * k_len * q_len);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* a = probs.data() + (b * heads + h) * k_len * q_len;
      for (std::size_t j = 0; j < k_len; ++j)
        for (std::size_t i = 0; i < q_len; ++i) {
          double s = 0.0;
          for (std::size_t r = h * e; r < (h + 1) * e; ++r)
            s += kv[r * kc + b * k_len + j] * qv[r * qc + b * q_len + i];
          a[j * q_len + i] = score_scale * s;
        }
      for (std::size_t i = 0; i < q_len; ++i) {
        double mx = a[i];
        for (std::size_t j = 1; j < k_len; ++j) mx = std::max(mx, a[j * q_len + i]);
        double total = 0.0;
        for (std::size_t j = 0; j < k_len; ++j) {
          a[j * q_len + i] = std::exp(a[j * q_len + i] - mx);
          total += a[j * q_len + i];
        }
        for (std::size_t j = 0; j < k_len; ++j) a[j * q_len + i] /= total;
      }
      for (std::size_t r = h * e; r < (h + 1) * e; ++r)
        for (std::size_t i = 0; i < q_len; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < k_len; ++j) s += vv[r * kc + b * k_len + j] * a[j * q_len + i];
          o[r * qc + b * q_len + i] = s;
        }
    }
  }
  if (tape.wants({&q, &k, &v})) {
    auto sq = q.storage_ptr(), sk = k.storage_ptr(), sv = v.storage_ptr();
    tape.record(out, [sq, sk, sv, probs = std::move(probs), heads, e, batch, q_len, k_len, qc, kc,
                      score_scale](std::span<const double> g) {
      double* gq = grad_of(sq);
      double* gk = grad_of(sk);
      double* gv = grad_of(sv);
      const auto& qv = sq->value;
      const auto& kv = sk->value;
      const auto& vv = sv->value;
      std::vector<double> ga(k_len * q_len);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const double* a = probs.data() + (b * heads + h) * k_len * q_len;
          // dL/dA[j,i] = sum_r g[r,i] V[r,j]; dL/dV[r,j] = sum_i g[r,i] A[j,i]
          std::fill(ga.begin(), ga.end(), 0.0);
          for (std::size_t r = h * e; r < (h + 1) * e; ++r)
            for (std::size_t j = 0; j < k_len; ++j) {
              const double vrj = vv[r * kc + b * k_len + j];
              double acc = 0.0;
              for (std::size_t i = 0; i < q_len; ++i) {
                const double gri = g[r * qc + b * q_len + i];
                ga[j * q_len + i] += gri * vrj;
                acc += gri * a[j * q_len + i];
              }
              if (gv) gv[r * kc + b * k_len + j] += acc;
            }
          // softmax backward over keys, folded with the score scale
          for (std::size_t i = 0; i < q_len; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k_len; ++j) dot += ga[j * q_len + i] * a[j * q_len + i];
            for (std::size_t j = 0; j < k_len; ++j)
              ga[j * q_len + i] = score_scale * a[j * q_len + i] * (ga[j * q_len + i] - dot);
          }
          for (std::size_t r = h * e; r < (h + 1) * e; ++r) {
            if (gq) {
              for (std::size_t i = 0; i < q_len; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < k_len; ++j) acc += kv[r * kc + b * k_len + j] * ga[j * q_len + i];
                gq[r * qc + b * q_len + i] += acc;
              }
            }
            if (gk) {
              for (std::size_t j = 0; j < k_len; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < q_len; ++i) acc += qv[r * qc + b * q_len + i] * ga[j * q_len + i];
                gk[r * kc + b * k_len + j] += acc;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace xel
