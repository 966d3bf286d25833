#include "snx/attack.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "snx/errors.hpp"

namespace snx {

namespace {

using Vec = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void check_dims(const ad::Tensor& theta, std::size_t n, const char* what) {
  if (theta.rows != n) {
    throw ShapeError(std::string(what) + " has length " + std::to_string(n) + ", theta expects " +
                     std::to_string(theta.rows));
  }
}

// T' v
Vec project(const ad::Tensor& theta, std::span<const double> v) {
  Vec out(theta.cols, 0.0);
  for (std::size_t i = 0; i < theta.rows; ++i) {
    for (std::size_t j = 0; j < theta.cols; ++j) out[j] += theta(i, j) * v[i];
  }
  return out;
}

// T T' v
Vec gram(const ad::Tensor& theta, std::span<const double> v) {
  const Vec z = project(theta, v);
  Vec out(theta.rows, 0.0);
  for (std::size_t i = 0; i < theta.rows; ++i) {
    for (std::size_t j = 0; j < theta.cols; ++j) out[i] += theta(i, j) * z[j];
  }
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double d = norm(a) * norm(b);
  return d == 0.0 ? 0.0 : dot(a, b) / d;
}

Vec add(std::span<const double> a, std::span<const double> b) {
  Vec out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

}  // namespace

double linear_sn_score(const ad::Tensor& theta, std::span<const double> xs, std::span<const double> xt) {
  check_dims(theta, xs.size(), "x^s");
  check_dims(theta, xt.size(), "x^t");
  return dot(project(theta, xs), project(theta, xt));
}

std::vector<double> linear_saliency(const ad::Tensor& theta, std::span<const double> xs,
                                    std::span<const double> xt) {
  check_dims(theta, xs.size(), "x^s");
  check_dims(theta, xt.size(), "x^t");
  ad::Tensor theta_t(theta.cols, theta.rows);
  for (std::size_t i = 0; i < theta.rows; ++i) {
    for (std::size_t j = 0; j < theta.cols; ++j) theta_t(j, i) = theta(i, j);
  }
  ad::Tape tape;
  const ad::Var t = tape.constant(theta_t);
  const ad::Var a = tape.leaf("xs", xs.size());
  const ad::Var b = tape.constant(ad::Tensor::column(Vec(xt.begin(), xt.end())));
  tape.dot(tape.matmul(t, a), tape.matmul(t, b));
  tape.forward({{"xs", ad::Tensor::column(Vec(xs.begin(), xs.end()))}});
  return tape.backward().at("xs").data;
}

std::vector<double> linear_saliency_closed_form(const ad::Tensor& theta, std::span<const double> xt) {
  check_dims(theta, xt.size(), "x^t");
  return gram(theta, xt);
}

AttackResult manipulate_reference(const ad::Tensor& theta, std::span<const double> xs, std::span<const double> xt,
                                  std::span<const double> target, const AttackConfig& config) {
  const std::size_t p = xs.size();
  check_dims(theta, p, "x^s");
  check_dims(theta, xt.size(), "x^t");
  if (target.size() != p) throw ShapeError("target saliency has the wrong length");

  std::vector<std::size_t> zeros;
  for (std::size_t i = 0; i < p; ++i) {
    if (xs[i] == 0.0) zeros.push_back(i);
  }
  if (zeros.empty()) throw AttackInfeasibleError("query has no zero coordinate to hide a perturbation in");

  // Unit target direction restricted to the zero coordinates of x^s.
  Vec dir(p, 0.0);
  for (std::size_t i : zeros) dir[i] = target[i];
  const double dn = norm(dir);
  if (dn == 0.0) throw AttackInfeasibleError("target has no mass on the zero coordinates of the query");
  for (double& v : dir) v /= dn;

  // x_perp lives on the zero coordinates, so <x^s, x_perp> = 0. It cancels
  // the current saliency there and plants the amplified target direction.
  const Vec base = gram(theta, xt);
  const double scale = config.amplification * std::max(1.0, norm(base));
  Vec x_perp(p, 0.0);
  for (std::size_t i : zeros) x_perp[i] = scale * dir[i] - base[i];

  // Least squares T T' d = x_perp with d orthogonal to w = T T' x^s
  // (conjugate gradients on the normal equations, projected onto w-perp).
  Vec w = gram(theta, xs);
  const double wn = norm(w);
  auto proj = [&](Vec v) {
    if (wn > 0.0) {
      const double c = dot(v, w) / (wn * wn);
      for (std::size_t i = 0; i < p; ++i) v[i] -= c * w[i];
    }
    return v;
  };

  AttackResult res;
  res.target.assign(target.begin(), target.end());
  Vec d(p, 0.0);
  Vec r = x_perp;
  Vec s = proj(gram(theta, r));
  Vec dirv = s;
  double gamma = dot(s, s);
  const double stop = config.tolerance * std::max(1.0, norm(proj(gram(theta, x_perp))));
  std::size_t it = 0;
  while (it < config.max_iter && std::sqrt(gamma) > stop) {
    const Vec q = gram(theta, dirv);
    const double qq = dot(q, q);
    if (qq == 0.0) break;
    const double alpha = gamma / qq;
    for (std::size_t i = 0; i < p; ++i) {
      d[i] += alpha * dirv[i];
      r[i] -= alpha * q[i];
    }
    s = proj(gram(theta, r));
    const double next = dot(s, s);
    const double beta = next / gamma;
    for (std::size_t i = 0; i < p; ++i) dirv[i] = s[i] + beta * dirv[i];
    gamma = next;
    ++it;
  }
  res.delta = proj(d);
  res.iterations = it;

  const AttackCheck c = verify_attack(theta, xs, xt, res);
  res.drift = c.drift;
  res.alignment = c.alignment;
  res.orthogonality = c.orthogonality;
  return res;
}

AttackCheck verify_attack(const ad::Tensor& theta, std::span<const double> xs, std::span<const double> xt,
                          const AttackResult& result) {
  if (result.delta.size() != xt.size() || result.target.size() != xs.size()) {
    throw ShapeError("attack result does not match the instance");
  }
  AttackCheck c;
  const Vec moved = add(xt, result.delta);
  c.drift = std::fabs(linear_sn_score(theta, xs, xt) - linear_sn_score(theta, xs, moved));
  c.alignment = cosine(linear_saliency_closed_form(theta, moved), result.target);
  c.orthogonality = std::fabs(dot(xs, gram(theta, result.delta)));
  return c;
}

bool attack_consistent(const ad::Tensor& theta, std::span<const double> xs, std::span<const double> xt,
                       const AttackResult& result, double tol) {
  const AttackCheck c = verify_attack(theta, xs, xt, result);
  return std::fabs(c.drift - result.drift) <= tol && std::fabs(c.alignment - result.alignment) <= tol;
}

AttackInstance random_attack_instance(std::uint64_t seed, std::size_t p) {
  if (p < 2) throw InputError("attack instances need p >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  AttackInstance inst;
  inst.theta = ad::Tensor(p, p);
  for (double& v : inst.theta.data) v = normal(rng);

  // Roughly one-hot: a few ones, the rest zeros, never all ones.
  inst.xs.assign(p, 0.0);
  const std::size_t ones = std::uniform_int_distribution<std::size_t>(1, std::max<std::size_t>(1, p / 3))(rng);
  std::vector<std::size_t> idx(p);
  for (std::size_t i = 0; i < p; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t k = 0; k < ones; ++k) inst.xs[idx[k]] = 1.0;

  inst.xt.resize(p);
  for (double& v : inst.xt) v = normal(rng);

  inst.target.assign(p, 0.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < p; ++i) {
    if (inst.xs[i] == 0.0) inst.target[i] = unit(rng);
  }
  return inst;
}

std::string attack_report_json(const AttackInstance& instance, const AttackResult& result, std::uint64_t seed) {
  nlohmann::json j;
  j["format"] = "snx-attack";
  j["version"] = 1;
  j["seed"] = seed;
  j["theta_rows"] = instance.theta.rows;
  j["theta_cols"] = instance.theta.cols;
  j["query"] = instance.xs;
  j["reference"] = instance.xt;
  j["target"] = result.target;
  j["delta"] = result.delta;
  j["drift"] = result.drift;
  j["alignment"] = result.alignment;
  j["orthogonality"] = result.orthogonality;
  j["iterations"] = result.iterations;
  return j.dump(2) + "\n";
}

}  // namespace snx
