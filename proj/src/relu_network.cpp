#include "cae/checkpoint.hpp"
#include "cae/simplicial.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <queue>
#include <set>

namespace cae {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

ReluLayer make_layer(std::size_t rows, std::size_t cols, const Triplets& w, const std::vector<std::pair<std::size_t, double>>& b,
                     Activation act) {
  ReluLayer layer;
  layer.weight.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  layer.weight.setFromTriplets(w.begin(), w.end());
  layer.weight.makeCompressed();
  layer.bias.resize(static_cast<Eigen::Index>(rows));
  for (const auto& [i, v] : b) layer.bias.insert(static_cast<Eigen::Index>(i)) = v;
  layer.activation = act;
  return layer;
}

void finish(ReluNetwork& net, std::size_t declared_params) {
  net.declared_param_count = declared_params;
  net.declared_depth = net.depth();
  if (net.param_count() != declared_params) {
    throw std::logic_error("network construction: declared " + std::to_string(declared_params) +
                           " parameters but stored " + std::to_string(net.param_count()));
  }
}

using Cell = std::vector<Eigen::VectorXd>;

// Splits a convex cell by the sign of a.x + b. Cells of dimension <= 2 are
// kept as cyclically ordered vertex lists; higher dimensions use all vertex
// pairs, which adds interior points but leaves the hull unchanged.
void split_cell(const Cell& cell, const Eigen::RowVectorXd& a, double b, double tol, bool ordered,
                std::vector<Cell>& out) {
  std::vector<double> h;
  bool pos = false, neg = false;
  for (const auto& p : cell) {
    h.push_back(a.dot(p) + b);
    pos = pos || h.back() > tol;
    neg = neg || h.back() < -tol;
  }
  if (!(pos && neg)) {
    out.push_back(cell);
    return;
  }
  const auto cut = [&](std::size_t u, std::size_t w) {
    const double t = h[u] / (h[u] - h[w]);
    return Eigen::VectorXd(cell[u] + t * (cell[w] - cell[u]));
  };
  const auto add = [](Cell& c, const Eigen::VectorXd& p) {
    const bool seen = std::any_of(c.begin(), c.end(), [&](const Eigen::VectorXd& q) { return (q - p).norm() <= 1e-14; });
    if (!seen) c.push_back(p);
  };
  Cell upper, lower;
  const std::size_t n = cell.size();
  for (std::size_t u = 0; u < n; ++u) {
    if (h[u] >= -tol) add(upper, cell[u]);
    if (h[u] <= tol) add(lower, cell[u]);
    if (ordered) {
      const std::size_t w = (u + 1) % n;
      if ((h[u] > tol && h[w] < -tol) || (h[u] < -tol && h[w] > tol)) {
        const auto p = cut(u, w);
        add(upper, p);
        add(lower, p);
      }
    }
  }
  if (!ordered) {
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t w = u + 1; w < n; ++w) {
        if ((h[u] > tol && h[w] < -tol) || (h[u] < -tol && h[w] > tol)) {
          const auto p = cut(u, w);
          add(upper, p);
          add(lower, p);
        }
      }
    }
  }
  out.push_back(std::move(upper));
  out.push_back(std::move(lower));
}

// Lattice expression over affine leaves.
struct Expr {
  enum Kind { leaf, min, max } kind = leaf;
  std::size_t leaf_id = 0;
  std::vector<Expr> kids;
};

Expr make_op(Expr::Kind kind, std::vector<Expr> kids) {
  if (kids.size() == 1) return std::move(kids.front());
  Expr e;
  e.kind = kind;
  for (auto& k : kids) {
    if (k.kind == kind) {
      for (auto& g : k.kids) e.kids.push_back(std::move(g));
    } else {
      e.kids.push_back(std::move(k));
    }
  }
  return e;
}

Expr leaves_min(const std::set<std::size_t>& ids) {
  std::vector<Expr> kids;
  for (auto id : ids) kids.push_back({Expr::leaf, id, {}});
  return make_op(Expr::min, std::move(kids));
}

// max over sets of min over each set, factored with the distributive law
// where the sets share elements.
Expr factor(std::vector<std::set<std::size_t>> sets) {
  if (sets.size() == 1) return leaves_min(sets.front());
  std::set<std::size_t> common = sets.front();
  for (const auto& s : sets) {
    std::set<std::size_t> keep;
    std::set_intersection(common.begin(), common.end(), s.begin(), s.end(), std::inserter(keep, keep.end()));
    common = std::move(keep);
  }
  if (!common.empty()) {
    for (auto& s : sets) {
      for (auto c : common) s.erase(c);
    }
    std::vector<Expr> kids;
    for (auto c : common) kids.push_back({Expr::leaf, c, {}});
    kids.push_back(factor(std::move(sets)));
    return make_op(Expr::min, std::move(kids));
  }
  // Split into groups of sets connected by shared elements.
  std::vector<int> group(sets.size(), -1);
  int groups = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (group[i] >= 0) continue;
    std::vector<std::size_t> stack{i};
    group[i] = groups;
    while (!stack.empty()) {
      const auto a = stack.back();
      stack.pop_back();
      for (std::size_t b = 0; b < sets.size(); ++b) {
        if (group[b] >= 0) continue;
        const bool share = std::any_of(sets[a].begin(), sets[a].end(), [&](auto x) { return sets[b].count(x) > 0; });
        if (share) {
          group[b] = groups;
          stack.push_back(b);
        }
      }
    }
    ++groups;
  }
  std::vector<Expr> kids;
  if (groups > 1) {
    for (int g = 0; g < groups; ++g) {
      std::vector<std::set<std::size_t>> part;
      for (std::size_t i = 0; i < sets.size(); ++i) {
        if (group[i] == g) part.push_back(sets[i]);
      }
      kids.push_back(factor(std::move(part)));
    }
  } else {
    for (const auto& s : sets) kids.push_back(leaves_min(s));
  }
  return make_op(Expr::max, std::move(kids));
}

// Binary node of a scheduled lattice tree.
struct BNode {
  Expr::Kind kind = Expr::leaf;
  std::size_t leaf_row = 0;
  std::size_t a = 0, b = 0;
  std::size_t height = 0;
  std::size_t need = 0;  // level at which the parent consumes this value
};

// Huffman-style pairing by height keeps the tree as shallow as possible.
std::size_t binarize(const Expr& e, const std::vector<std::size_t>& leaf_rows, std::vector<BNode>& out) {
  if (e.kind == Expr::leaf) {
    out.push_back({Expr::leaf, leaf_rows[e.leaf_id], 0, 0, 0, 0});
    return out.size() - 1;
  }
  using Item = std::pair<std::pair<std::size_t, std::size_t>, std::size_t>;  // (height, order), node
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  std::size_t order = 0;
  for (const auto& k : e.kids) {
    const auto id = binarize(k, leaf_rows, out);
    queue.push({{out[id].height, order++}, id});
  }
  while (queue.size() > 1) {
    const auto x = queue.top();
    queue.pop();
    const auto y = queue.top();
    queue.pop();
    BNode node;
    node.kind = e.kind;
    node.a = x.second;
    node.b = y.second;
    node.height = std::max(out[node.a].height, out[node.b].height) + 1;
    out.push_back(node);
    queue.push({{node.height, order++}, out.size() - 1});
  }
  return queue.top().second;
}

// A hat is a signed sum of lattice trees; most hats are a single tree.
struct HatPlan {
  std::vector<BNode> nodes;
  std::vector<std::pair<std::size_t, double>> roots;
  std::size_t height() const {
    std::size_t h = 0;
    for (const auto& [r, c] : roots) h = std::max(h, nodes[r].height);
    return h;
  }
};

std::size_t ceil_log2(std::size_t k) {
  std::size_t h = 0;
  while ((std::size_t{1} << h) < k) ++h;
  return h;
}

// relu(max_s min J_s) as one factored tree, or, when that tree is taller
// than max_height, as sum_T (-1)^(|T|+1) relu(min over the union of J_s, s in T).
HatPlan plan_hat(const std::vector<std::set<std::size_t>>& sets, const std::vector<std::size_t>& leaf_rows,
                 std::size_t max_height) {
  HatPlan plan;
  plan.roots.emplace_back(binarize(factor(sets), leaf_rows, plan.nodes), 1.0);
  if (plan.height() <= max_height || sets.size() > 20) return plan;
  std::map<std::set<std::size_t>, double> terms;
  for (std::size_t mask = 1; mask < (std::size_t{1} << sets.size()); ++mask) {
    std::set<std::size_t> u;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      if (mask >> k & 1) u.insert(sets[k].begin(), sets[k].end());
    }
    terms[u] += std::popcount(mask) % 2 == 1 ? 1.0 : -1.0;
  }
  HatPlan expanded;
  for (const auto& [u, c] : terms) {
    if (c != 0.0) expanded.roots.emplace_back(binarize(leaves_min(u), leaf_rows, expanded.nodes), c);
  }
  return expanded;
}

// Affine form of the barycentric coordinate of v in simplex s:
// 1 - 1^T (W x + b) with W = V^-1, b = -V^-1 v, V = (v_1 - v, ..., v_d - v).
std::pair<Eigen::RowVectorXd, double> hat_piece(const SimplicialComplex& s, std::size_t simplex, std::size_t v) {
  const auto d = static_cast<Eigen::Index>(s.dim());
  const Eigen::RowVectorXd pv = s.vertices.row(static_cast<Eigen::Index>(v));
  RowMatrix V(d, d);
  Eigen::Index k = 0;
  for (auto u : s.simplices[simplex]) {
    if (u != v) V.col(k++) = (s.vertices.row(static_cast<Eigen::Index>(u)) - pv).transpose();
  }
  const RowMatrix W = V.inverse();
  const Eigen::VectorXd b = -W * pv.transpose();
  return {-W.colwise().sum(), 1.0 - b.sum()};
}

ReluNetwork compile_hats(const SimplicialComplex& s, const std::vector<std::size_t>& hats,
                         const Eigen::Ref<const RowMatrix>& values) {
  const std::size_t d = s.dim();
  const std::size_t q = static_cast<std::size_t>(values.cols());
  std::size_t params = 0;
  const std::size_t max_height = ceil_log2(s.max_ring());

  // Layer 0: one affine piece per (hat, ring simplex).
  Triplets w0;
  std::vector<std::pair<std::size_t, double>> b0;
  std::vector<HatPlan> plans;
  std::size_t rows0 = 0;
  for (auto v : hats) {
    const auto& ring = s.ring.at(v);
    if (ring.empty()) throw ComplexError("hat_function: vertex " + std::to_string(v) + " has an empty ring");
    std::vector<std::pair<Eigen::RowVectorXd, double>> pieces;
    std::vector<std::size_t> leaf_rows;
    for (auto simplex : ring) {
      pieces.push_back(hat_piece(s, simplex, v));
      for (std::size_t j = 0; j < d; ++j) w0.emplace_back(rows0, j, pieces.back().first(static_cast<Eigen::Index>(j)));
      b0.emplace_back(rows0, pieces.back().second);
      leaf_rows.push_back(rows0++);
      params += d + 1;
    }
    // Max-min form: each ring simplex is cut into cells on which the order
    // of the pieces against piece i is fixed, and each cell contributes the
    // min over the pieces lying above piece i on it.
    std::set<std::set<std::size_t>> all;
    for (std::size_t i = 0; i < ring.size(); ++i) {
      Cell simplex_cell;
      for (auto u : s.simplices[ring[i]]) simplex_cell.push_back(s.vertices.row(static_cast<Eigen::Index>(u)).transpose());
      double scale = 1.0;
      for (const auto& piece : pieces) {
        for (const auto& p : simplex_cell) scale = std::max(scale, std::abs(piece.first.dot(p) + piece.second));
      }
      const double tol = 1e-10 * scale;
      std::vector<Cell> cells{simplex_cell};
      for (std::size_t j = 0; j < ring.size(); ++j) {
        if (j == i) continue;
        const Eigen::RowVectorXd a = pieces[j].first - pieces[i].first;
        const double b = pieces[j].second - pieces[i].second;
        std::vector<Cell> next;
        for (auto& c : cells) split_cell(c, a, b, tol, d <= 2, next);
        cells = std::move(next);
      }
      for (const auto& c : cells) {
        std::set<std::size_t> J;
        for (std::size_t j = 0; j < ring.size(); ++j) {
          const bool above = std::all_of(c.begin(), c.end(), [&](const Eigen::VectorXd& p) {
            return pieces[j].first.dot(p) + pieces[j].second >= pieces[i].first.dot(p) + pieces[i].second - tol;
          });
          if (above) J.insert(j);
        }
        all.insert(std::move(J));
      }
    }
    std::vector<std::set<std::size_t>> minimal;
    for (const auto& J : all) {
      const bool has_subset = std::any_of(all.begin(), all.end(), [&](const auto& other) {
        return other.size() < J.size() && std::includes(J.begin(), J.end(), other.begin(), other.end());
      });
      if (!has_subset) minimal.push_back(J);
    }
    plans.push_back(plan_hat(minimal, leaf_rows, max_height));
  }

  std::size_t H = 0;
  for (const auto& p : plans) H = std::max(H, p.height());
  for (auto& p : plans) {
    for (auto& n : p.nodes) {
      if (n.kind != Expr::leaf) {
        p.nodes[n.a].need = n.height;
        p.nodes[n.b].need = n.height;
      }
    }
    for (const auto& [r, c] : p.roots) p.nodes[r].need = H + 1;
  }

  ReluNetwork net;
  net.input_dim = d;
  net.layers.push_back(make_layer(rows0, d, w0, b0, H == 0 ? Activation::relu : Activation::identity));

  // row of each node's value in the current layer output
  std::vector<std::vector<std::size_t>> row(plans.size());
  for (std::size_t h = 0; h < plans.size(); ++h) {
    row[h].assign(plans[h].nodes.size(), 0);
    for (std::size_t i = 0; i < plans[h].nodes.size(); ++i) {
      if (plans[h].nodes[i].kind == Expr::leaf) row[h][i] = plans[h].nodes[i].leaf_row;
    }
  }
  std::size_t width = rows0;
  for (std::size_t L = 1; L <= H; ++L) {
    Triplets wr, wc;
    std::size_t units = 0, outs = 0;
    std::vector<std::vector<std::size_t>> next_row = row;
    for (std::size_t h = 0; h < plans.size(); ++h) {
      for (std::size_t i = 0; i < plans[h].nodes.size(); ++i) {
        const auto& n = plans[h].nodes[i];
        if (!(n.height <= L && L < n.need)) continue;
        if (n.height == L) {
          // min(a, b) = a - relu(a - b); max(a, b) = a + relu(b - a)
          const auto ra = row[h][n.a], rb = row[h][n.b];
          const double sgn = n.kind == Expr::min ? 1.0 : -1.0;
          wr.emplace_back(units, ra, 1.0);
          wr.emplace_back(units + 1, ra, -1.0);
          wr.emplace_back(units + 2, ra, sgn);
          wr.emplace_back(units + 2, rb, -sgn);
          wc.emplace_back(outs, units, 1.0);
          wc.emplace_back(outs, units + 1, -1.0);
          wc.emplace_back(outs, units + 2, -sgn);
          units += 3;
          params += 7;
        } else {
          wr.emplace_back(units, row[h][i], 1.0);
          wr.emplace_back(units + 1, row[h][i], -1.0);
          wc.emplace_back(outs, units, 1.0);
          wc.emplace_back(outs, units + 1, -1.0);
          units += 2;
          params += 4;
        }
        next_row[h][i] = outs++;
      }
    }
    net.layers.push_back(make_layer(units, width, wr, {}, Activation::relu));
    net.layers.push_back(make_layer(outs, units, wc, {}, L == H ? Activation::relu : Activation::identity));
    row = std::move(next_row);
    width = outs;
  }

  Triplets wo;
  for (std::size_t h = 0; h < plans.size(); ++h) {
    for (std::size_t k = 0; k < q; ++k) {
      for (const auto& [r, c] : plans[h].roots) {
        wo.emplace_back(k, row[h][r], c * values(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(k)));
        ++params;
      }
    }
  }
  net.layers.push_back(make_layer(q, width, wo, {}, Activation::identity));
  finish(net, params);
  return net;
}

}  // namespace

std::size_t ReluNetwork::output_dim() const {
  return layers.empty() ? input_dim : static_cast<std::size_t>(layers.back().weight.rows());
}

std::size_t ReluNetwork::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.nonZeros() + l.bias.nonZeros());
  return n;
}

std::size_t ReluNetwork::depth() const {
  std::size_t relu_layers = 0;
  for (const auto& l : layers) relu_layers += l.activation == Activation::relu ? 1 : 0;
  return relu_layers + 1;
}

RowMatrix ReluNetwork::evaluate(const Eigen::Ref<const RowMatrix>& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim) {
    throw ShapeError("ReluNetwork: expected " + std::to_string(input_dim) + " inputs, got " +
                     std::to_string(x.cols()));
  }
  RowMatrix h = x;
  for (const auto& l : layers) {
    RowMatrix next = h * l.weight.transpose();
    next.rowwise() += Eigen::VectorXd(l.bias).transpose();
    if (l.activation == Activation::relu) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

Eigen::VectorXd ReluNetwork::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return evaluate(x.transpose()).row(0).transpose();
}

ReluNetwork relu_min2() {
  ReluNetwork net;
  net.input_dim = 2;
  const Triplets w1{{0, 0, 1}, {0, 1, 1}, {1, 0, 1}, {1, 1, -1}, {2, 0, -1}, {2, 1, 1}, {3, 0, -1}, {3, 1, -1}};
  const Triplets w2{{0, 0, 0.5}, {0, 1, -0.5}, {0, 2, -0.5}, {0, 3, -0.5}};
  net.layers.push_back(make_layer(4, 2, w1, {}, Activation::relu));
  net.layers.push_back(make_layer(1, 4, w2, {}, Activation::identity));
  finish(net, 12);
  return net;
}

ReluNetwork relu_min_tree(std::size_t k) {
  if (k == 0) throw std::invalid_argument("relu_min_tree: k must be >= 1");
  ReluNetwork net;
  net.input_dim = k;
  std::size_t params = 0;
  if (k == 1) {
    net.layers.push_back(make_layer(1, 1, {{0, 0, 1.0}}, {}, Activation::identity));
    finish(net, 1);
    return net;
  }
  std::size_t width = k;
  while (width > 1) {
    Triplets wr, wc;
    std::size_t units = 0, outs = 0;
    for (std::size_t i = 0; i < width; i += 2) {
      const auto r = [&](std::size_t row, std::size_t col, double v) { wr.emplace_back(row, col, v); };
      const auto c = [&](std::size_t col, double v) { wc.emplace_back(outs, col, v); };
      if (i + 1 < width) {
        r(units, i, 1), r(units, i + 1, 1);
        r(units + 1, i, 1), r(units + 1, i + 1, -1);
        r(units + 2, i, -1), r(units + 2, i + 1, 1);
        r(units + 3, i, -1), r(units + 3, i + 1, -1);
        c(units, 0.5), c(units + 1, -0.5), c(units + 2, -0.5), c(units + 3, -0.5);
        units += 4;
        params += 12;
      } else {
        r(units, i, 1), r(units + 1, i, -1);
        c(units, 1), c(units + 1, -1);
        units += 2;
        params += 4;
      }
      ++outs;
    }
    net.layers.push_back(make_layer(units, width, wr, {}, Activation::relu));
    net.layers.push_back(make_layer(outs, units, wc, {}, Activation::identity));
    width = outs;
  }
  finish(net, params);
  return net;
}

ReluNetwork hat_function(const SimplicialComplex& s, std::size_t v) {
  if (v >= s.num_vertices()) throw std::out_of_range("hat_function: vertex index out of range");
  return compile_hats(s, {v}, RowMatrix::Ones(1, 1));
}

ReluNetwork compile_pl(const SimplicialComplex& s, const Eigen::Ref<const RowMatrix>& values) {
  if (static_cast<std::size_t>(values.rows()) != s.num_vertices()) {
    throw std::invalid_argument("compile_pl: " + std::to_string(values.rows()) + " value rows for " +
                                std::to_string(s.num_vertices()) + " vertices");
  }
  std::vector<std::size_t> hats;
  for (std::size_t v = 0; v < s.num_vertices(); ++v) {
    if (!s.ring[v].empty()) hats.push_back(v);
  }
  RowMatrix used(static_cast<Eigen::Index>(hats.size()), values.cols());
  for (std::size_t i = 0; i < hats.size(); ++i) used.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(hats[i]));
  return compile_hats(s, hats, used);
}

CompileBounds check_bounds(const SimplicialComplex& s, std::size_t q, const ReluNetwork& net) {
  CompileBounds b;
  b.K = s.max_ring();
  const std::size_t n = s.num_vertices(), d = s.dim(), K = b.K;
  b.param_bound = q * (n * (K * (d + 1) + 4 * (2 * K - 1)) + n);
  b.depth_bound = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(std::max<std::size_t>(K, 1))))) + 2;
  b.params_ok = net.declared_param_count == net.param_count() && net.declared_param_count <= b.param_bound;
  b.depth_ok = net.declared_depth == net.depth() && net.declared_depth <= b.depth_bound;
  return b;
}

Eigen::VectorXd pl_interpolate(const SimplicialComplex& s, const Eigen::Ref<const RowMatrix>& values,
                               const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto t = s.locate(x, 1e-12);
  if (t == SimplicialComplex::npos) throw std::domain_error("pl_interpolate: point outside the complex");
  const Eigen::VectorXd bary = s.barycentric(t, x);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(values.cols());
  for (std::size_t k = 0; k < s.simplices[t].size(); ++k) {
    out += bary(static_cast<Eigen::Index>(k)) * values.row(static_cast<Eigen::Index>(s.simplices[t][k])).transpose();
  }
  return out;
}

void save_network(const ReluNetwork& net, const std::filesystem::path& path) {
  std::map<std::string, NamedTensor> t;
  t["network.meta"] = {{3},
                       Eigen::Vector3d(static_cast<double>(net.input_dim), static_cast<double>(net.declared_param_count),
                                       static_cast<double>(net.declared_depth))};
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    const auto base = "layer" + std::to_string(k);
    RowMatrix W = RowMatrix(l.weight);
    RowMatrix mask = RowMatrix::Zero(W.rows(), W.cols());
    for (Eigen::Index r = 0; r < l.weight.outerSize(); ++r) {
      for (decltype(l.weight)::InnerIterator it(l.weight, r); it; ++it) mask(it.row(), it.col()) = 1.0;
    }
    const Shape shape{static_cast<std::size_t>(W.rows()), static_cast<std::size_t>(W.cols())};
    t[base + ".weight"] = {shape, Eigen::Map<const Eigen::VectorXd>(W.data(), W.size())};
    t[base + ".weight_mask"] = {shape, Eigen::Map<const Eigen::VectorXd>(mask.data(), mask.size())};
    Eigen::VectorXd b = Eigen::VectorXd(l.bias);
    Eigen::VectorXd bmask = Eigen::VectorXd::Zero(b.size());
    for (decltype(l.bias)::InnerIterator it(l.bias); it; ++it) bmask(it.index()) = 1.0;
    t[base + ".bias"] = {{static_cast<std::size_t>(b.size())}, b};
    t[base + ".bias_mask"] = {{static_cast<std::size_t>(b.size())}, bmask};
    t[base + ".relu"] = {{1}, Eigen::VectorXd::Constant(1, l.activation == Activation::relu ? 1.0 : 0.0)};
  }
  write_tensors(path, t);
}

ReluNetwork load_network(const std::filesystem::path& path) {
  const auto t = read_tensors(path);
  const auto get = [&](const std::string& name) -> const NamedTensor& {
    const auto it = t.find(name);
    if (it == t.end()) throw CorruptCheckpoint("network checkpoint is missing '" + name + "'");
    return it->second;
  };
  const auto& meta = get("network.meta").values;
  if (meta.size() != 3) throw CorruptCheckpoint("network.meta must hold three values");
  ReluNetwork net;
  net.input_dim = static_cast<std::size_t>(meta(0));
  for (std::size_t k = 0;; ++k) {
    const auto base = "layer" + std::to_string(k);
    if (!t.count(base + ".weight")) break;
    const auto& w = get(base + ".weight");
    const auto& wm = get(base + ".weight_mask");
    if (w.shape.size() != 2 || wm.shape != w.shape) throw CorruptCheckpoint(base + ": bad weight shape");
    const auto rows = w.shape[0], cols = w.shape[1];
    Triplets trip;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const auto i = static_cast<Eigen::Index>(r * cols + c);
        if (wm.values(i) != 0.0) trip.emplace_back(r, c, w.values(i));
      }
    }
    const auto& b = get(base + ".bias");
    const auto& bm = get(base + ".bias_mask");
    if (b.values.size() != static_cast<Eigen::Index>(rows) || bm.values.size() != b.values.size()) {
      throw CorruptCheckpoint(base + ": bias length mismatch");
    }
    std::vector<std::pair<std::size_t, double>> bias;
    for (std::size_t r = 0; r < rows; ++r) {
      if (bm.values(static_cast<Eigen::Index>(r)) != 0.0) bias.emplace_back(r, b.values(static_cast<Eigen::Index>(r)));
    }
    const bool relu = get(base + ".relu").values(0) != 0.0;
    net.layers.push_back(make_layer(rows, cols, trip, bias, relu ? Activation::relu : Activation::identity));
  }
  net.declared_param_count = static_cast<std::size_t>(meta(1));
  net.declared_depth = static_cast<std::size_t>(meta(2));
  return net;
}

}  // namespace cae
