#pragma once

// Finite-difference verification of the tape. Always runs in double with
// central differences; the tolerance headroom is why training precision and
// checking precision are separate.

#include <functional>
#include <string>
#include <vector>

#include "audiodiff/tensor.hpp"

namespace audiodiff::grad {

// Builds a scalar loss from leaf variables. Must construct the same graph for
// the same inputs on every call.
using LossBuilder = std::function<VarId(Graph<double>&, const std::vector<VarId>&)>;

struct FdReport {
  double max_rel_err = 0.0;
  size_t coords = 0;
};

inline FdReport finite_difference_check(const LossBuilder& build,
                                        const std::vector<Mat<double>>& inputs,
                                        double eps = 1e-5) {
  Graph<double> g(true);
  std::vector<VarId> leaves;
  leaves.reserve(inputs.size());
  for (const auto& m : inputs) leaves.push_back(g.leaf(m, true));
  const VarId loss = build(g, leaves);
  if (!std::isfinite(g.scalar(loss))) throw std::runtime_error("fd check: non-finite loss");
  g.backward(loss);

  std::vector<Mat<double>> analytic;
  analytic.reserve(leaves.size());
  for (VarId id : leaves) analytic.push_back(g.grad(id));

  auto eval = [&](const std::vector<Mat<double>>& pt) {
    Graph<double> h(false);
    std::vector<VarId> ls;
    ls.reserve(pt.size());
    for (const auto& m : pt) ls.push_back(h.leaf(m, false));
    const double v = h.scalar(build(h, ls));
    if (!std::isfinite(v)) throw std::runtime_error("fd check: non-finite loss");
    return v;
  };

  FdReport rep;
  std::vector<Mat<double>> pt = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t j = 0; j < inputs[i].size(); ++j) {
      const double orig = pt[i].v[j];
      pt[i].v[j] = orig + eps;
      const double fp = eval(pt);
      pt[i].v[j] = orig - eps;
      const double fm = eval(pt);
      pt[i].v[j] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double ad = analytic[i].v[j];
      const double err = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-12});
      rep.max_rel_err = std::max(rep.max_rel_err, err);
      ++rep.coords;
    }
  }
  return rep;
}

struct PrimitiveCheck {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  bool pass = false;
};

// One entry per tape primitive, each checked on `rounds` random shapes/seeds.
inline std::vector<PrimitiveCheck> check_all_primitives(int rounds = 10, double eps = 1e-5,
                                                        double tol = 1e-4,
                                                        uint64_t base_seed = 0x5eedULL) {
  struct Def {
    const char* name;
    std::function<double(util::Rng&)> run;  // returns max rel err for one round
  };

  auto rand_mat = [](util::Rng& rng, int r, int c) {
    return Mat<double>::gauss(r, c, 1.0, rng);
  };
  // Keeps relu/masking inputs away from the kink at zero.
  auto rand_mat_off_zero = [](util::Rng& rng, int r, int c) {
    Mat<double> m(r, c);
    for (auto& x : m.v) {
      double v = rng.next_gauss();
      if (std::abs(v) < 0.1) v = v < 0 ? v - 0.1 : v + 0.1;
      x = v;
    }
    return m;
  };
  auto weighted_sum = [](Graph<double>& g, VarId out, util::Rng& rng) {
    const auto& m = g.val(out);
    Mat<double> w = Mat<double>::gauss(m.rows, m.cols, 1.0, rng);
    return g.sum_all(g.mul(out, g.constant(w)));
  };

  const double kEps = eps;

  std::vector<Def> defs;
  auto binary = [&](const char* name, auto op) {
    defs.push_back({name, [=](util::Rng& rng) {
                      const int r = rng.next_int(1, 5), c = rng.next_int(1, 6);
                      // weight seed frozen so the builder is deterministic across calls
                      const uint64_t wseed = rng.next_u64();
                      auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                        util::Rng w2(wseed);
                        VarId out = op(g, in[0], in[1]);
                        return weighted_sum(g, out, w2);
                      };
                      return finite_difference_check(build, {rand_mat(rng, r, c), rand_mat(rng, r, c)},
                                                     kEps)
                          .max_rel_err;
                    }});
  };

  binary("add", [](Graph<double>& g, VarId a, VarId b) { return g.add(a, b); });
  binary("sub", [](Graph<double>& g, VarId a, VarId b) { return g.sub(a, b); });
  binary("mul", [](Graph<double>& g, VarId a, VarId b) { return g.mul(a, b); });

  auto unary = [&](const char* name, auto op, bool off_zero = false) {
    defs.push_back({name, [=](util::Rng& rng) {
                      const int r = rng.next_int(1, 5), c = rng.next_int(1, 6);
                      const uint64_t wseed = rng.next_u64();
                      auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                        util::Rng w2(wseed);
                        VarId out = op(g, in[0]);
                        return weighted_sum(g, out, w2);
                      };
                      Mat<double> x = off_zero ? rand_mat_off_zero(rng, r, c) : rand_mat(rng, r, c);
                      return finite_difference_check(build, {x}, kEps).max_rel_err;
                    }});
  };

  defs.push_back({"scale", [=](util::Rng& rng) {
                    const int r = rng.next_int(1, 5), c = rng.next_int(1, 6);
                    const double s = rng.next_real(-2.0, 2.0);
                    const uint64_t wseed = rng.next_u64();
                    auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                      util::Rng w2(wseed);
                      return weighted_sum(g, g.scale(in[0], s), w2);
                    };
                    return finite_difference_check(build, {rand_mat(rng, r, c)}, kEps).max_rel_err;
                  }});

  defs.push_back({"add_rowvec", [=](util::Rng& rng) {
                    const int r = rng.next_int(1, 5), c = rng.next_int(1, 6);
                    const uint64_t wseed = rng.next_u64();
                    auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                      util::Rng w2(wseed);
                      return weighted_sum(g, g.add_rowvec(in[0], in[1]), w2);
                    };
                    return finite_difference_check(build, {rand_mat(rng, r, c), rand_mat(rng, 1, c)}, kEps)
                        .max_rel_err;
                  }});
  defs.push_back({"mul_rowvec", [=](util::Rng& rng) {
                    const int r = rng.next_int(1, 5), c = rng.next_int(1, 6);
                    const uint64_t wseed = rng.next_u64();
                    auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                      util::Rng w2(wseed);
                      return weighted_sum(g, g.mul_rowvec(in[0], in[1]), w2);
                    };
                    return finite_difference_check(build, {rand_mat(rng, r, c), rand_mat(rng, 1, c)}, kEps)
                        .max_rel_err;
                  }});

  defs.push_back({"matmul", [=](util::Rng& rng) {
                    const int m = rng.next_int(1, 4), k = rng.next_int(1, 5), n = rng.next_int(1, 4);
                    const uint64_t wseed = rng.next_u64();
                    auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                      util::Rng w2(wseed);
                      return weighted_sum(g, g.matmul(in[0], in[1]), w2);
                    };
                    return finite_difference_check(build, {rand_mat(rng, m, k), rand_mat(rng, k, n)}, kEps)
                        .max_rel_err;
                  }});

  unary("transpose", [](Graph<double>& g, VarId a) { return g.transpose(a); });
  defs.push_back({"reshape", [=](util::Rng& rng) {
                    const int r = rng.next_int(1, 4), c = rng.next_int(1, 6);
                    const uint64_t wseed = rng.next_u64();
                    auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                      util::Rng w2(wseed);
                      return weighted_sum(g, g.reshape(in[0], c, r), w2);
                    };
                    return finite_difference_check(build, {rand_mat(rng, r, c)}, kEps).max_rel_err;
                  }});
  unary("relu", [](Graph<double>& g, VarId a) { return g.relu(a); }, true);
  unary("tanh", [](Graph<double>& g, VarId a) { return g.tanh(a); });
  unary("layernorm", [](Graph<double>& g, VarId a) { return g.layernorm(a); });
  unary("softmax_rows", [](Graph<double>& g, VarId a) { return g.softmax_rows(a); });

  defs.push_back({"softmax_cross_entropy", [=](util::Rng& rng) {
                    const int l = rng.next_int(2, 6), v = rng.next_int(2, 8);
                    const int pad_id = v;  // ids are < v, pad marker outside range
                    std::vector<int> targets(static_cast<size_t>(l));
                    for (auto& t : targets) t = rng.next_int(0, v - 1);
                    if (l > 2) targets[0] = pad_id;  // exercise masking
                    auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                      return g.softmax_cross_entropy(in[0], targets, pad_id);
                    };
                    return finite_difference_check(build, {rand_mat(rng, l, v)}, kEps).max_rel_err;
                  }});

  defs.push_back({"embedding_gather", [=](util::Rng& rng) {
                    const int v = rng.next_int(3, 8), d = rng.next_int(2, 6), l = rng.next_int(1, 6);
                    std::vector<int> ids(static_cast<size_t>(l));
                    for (auto& id : ids) id = rng.next_int(0, v - 1);
                    const uint64_t wseed = rng.next_u64();
                    auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                      util::Rng w2(wseed);
                      return weighted_sum(g, g.embedding_gather(in[0], ids), w2);
                    };
                    return finite_difference_check(build, {rand_mat(rng, v, d)}, kEps).max_rel_err;
                  }});

  defs.push_back({"unfold_time", [=](util::Rng& rng) {
                    const int t = rng.next_int(2, 9), c = rng.next_int(1, 4);
                    const int kernel = 3;
                    const int stride = rng.next_int(1, 2);
                    const uint64_t wseed = rng.next_u64();
                    auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                      util::Rng w2(wseed);
                      return weighted_sum(g, g.unfold_time(in[0], kernel, stride), w2);
                    };
                    return finite_difference_check(build, {rand_mat(rng, t, c)}, kEps).max_rel_err;
                  }});

  defs.push_back({"col_slice", [=](util::Rng& rng) {
                    const int r = rng.next_int(1, 4), c = rng.next_int(2, 8);
                    const int c0 = rng.next_int(0, c - 1);
                    const int len = rng.next_int(1, c - c0);
                    const uint64_t wseed = rng.next_u64();
                    auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                      util::Rng w2(wseed);
                      return weighted_sum(g, g.col_slice(in[0], c0, len), w2);
                    };
                    return finite_difference_check(build, {rand_mat(rng, r, c)}, kEps).max_rel_err;
                  }});

  defs.push_back({"col_concat", [=](util::Rng& rng) {
                    const int r = rng.next_int(1, 4);
                    const int c1 = rng.next_int(1, 4), c2 = rng.next_int(1, 4);
                    const uint64_t wseed = rng.next_u64();
                    auto build = [=](Graph<double>& g, const std::vector<VarId>& in) {
                      util::Rng w2(wseed);
                      return weighted_sum(g, g.col_concat({in[0], in[1]}), w2);
                    };
                    return finite_difference_check(build, {rand_mat(rng, r, c1), rand_mat(rng, r, c2)}, kEps)
                        .max_rel_err;
                  }});

  defs.push_back({"sum_all", [=](util::Rng& rng) {
                    const int r = rng.next_int(1, 5), c = rng.next_int(1, 6);
                    auto build = [](Graph<double>& g, const std::vector<VarId>& in) {
                      return g.sum_all(in[0]);
                    };
                    return finite_difference_check(build, {rand_mat(rng, r, c)}, kEps).max_rel_err;
                  }});
  defs.push_back({"mean_all", [=](util::Rng& rng) {
                    const int r = rng.next_int(1, 5), c = rng.next_int(1, 6);
                    auto build = [](Graph<double>& g, const std::vector<VarId>& in) {
                      return g.mean_all(in[0]);
                    };
                    return finite_difference_check(build, {rand_mat(rng, r, c)}, kEps).max_rel_err;
                  }});

  std::vector<PrimitiveCheck> out;
  for (const auto& def : defs) {
    PrimitiveCheck c;
    c.name = def.name;
    c.tolerance = tol;
    for (int round = 0; round < rounds; ++round) {
      util::Rng rng(util::derive_seed(base_seed, def.name, static_cast<uint64_t>(round)));
      c.max_rel_err = std::max(c.max_rel_err, def.run(rng));
    }
    c.pass = c.max_rel_err < tol;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace audiodiff::grad
