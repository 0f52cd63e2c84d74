#include "cae/simplicial.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>

namespace cae {

namespace {

RowMatrix edge_matrix(const RowMatrix& vertices, const std::vector<std::size_t>& simplex) {
  const auto d = vertices.cols();
  RowMatrix V(d, d);
  const auto v0 = vertices.row(static_cast<Eigen::Index>(simplex[0]));
  for (Eigen::Index k = 0; k < d; ++k) {
    V.col(k) = (vertices.row(static_cast<Eigen::Index>(simplex[static_cast<std::size_t>(k) + 1])) - v0).transpose();
  }
  return V;
}

double orientation(const RowMatrix& vertices, const std::vector<std::size_t>& facet, std::size_t apex) {
  std::vector<std::size_t> s = facet;
  s.push_back(apex);
  return edge_matrix(vertices, s).determinant();
}

}  // namespace

SimplicialComplex SimplicialComplex::from(RowMatrix vertices, std::vector<std::vector<std::size_t>> simplices) {
  const auto n = static_cast<std::size_t>(vertices.rows());
  const auto d = static_cast<std::size_t>(vertices.cols());
  if (d == 0) throw ComplexError("complex: vertices must have at least one coordinate");
  if (!vertices.allFinite()) throw ComplexError("complex: non-finite vertex coordinates");
  SimplicialComplex s;
  s.vertices = std::move(vertices);
  s.simplices = std::move(simplices);
  s.ring.assign(n, {});

  std::map<std::vector<std::size_t>, std::vector<std::pair<std::size_t, std::size_t>>> facets;
  for (std::size_t i = 0; i < s.simplices.size(); ++i) {
    const auto& simplex = s.simplices[i];
    if (simplex.size() != d + 1) {
      throw ComplexError("complex: simplex " + std::to_string(i) + " has " + std::to_string(simplex.size()) +
                         " vertices, expected " + std::to_string(d + 1));
    }
    for (auto v : simplex) {
      if (v >= n) throw ComplexError("complex: simplex " + std::to_string(i) + " references vertex " + std::to_string(v));
    }
    auto sorted = simplex;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ComplexError("complex: simplex " + std::to_string(i) + " repeats a vertex");
    }
    const double det = edge_matrix(s.vertices, simplex).determinant();
    if (!(std::abs(det) > 1e-12)) {
      throw ComplexError("complex: simplex " + std::to_string(i) + " is degenerate (|det V| = " +
                         std::to_string(std::abs(det)) + ")");
    }
    for (auto v : simplex) s.ring[v].push_back(i);
    for (std::size_t k = 0; k <= d; ++k) {
      std::vector<std::size_t> facet;
      for (std::size_t j = 0; j <= d; ++j) {
        if (j != k) facet.push_back(sorted[j]);
      }
      facets[facet].emplace_back(i, sorted[k]);
    }
  }
  for (const auto& [facet, owners] : facets) {
    if (owners.size() > 2) {
      throw ComplexError("complex: a facet is shared by " + std::to_string(owners.size()) + " simplices");
    }
    if (owners.size() == 2) {
      const double a = orientation(s.vertices, facet, owners[0].second);
      const double b = orientation(s.vertices, facet, owners[1].second);
      if (a * b >= 0) {
        throw ComplexError("complex: simplices " + std::to_string(owners[0].first) + " and " +
                           std::to_string(owners[1].first) + " overlap across a shared facet");
      }
    }
  }
  return s;
}

std::size_t SimplicialComplex::max_ring() const {
  std::size_t k = 0;
  for (const auto& r : ring) k = std::max(k, r.size());
  return k;
}

Eigen::VectorXd SimplicialComplex::barycentric(std::size_t s, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const auto& simplex = simplices.at(s);
  const RowMatrix V = edge_matrix(vertices, simplex);
  const Eigen::VectorXd b =
      V.partialPivLu().solve(x - vertices.row(static_cast<Eigen::Index>(simplex[0])).transpose());
  Eigen::VectorXd out(b.size() + 1);
  out(0) = 1.0 - b.sum();
  out.tail(b.size()) = b;
  return out;
}

std::size_t SimplicialComplex::locate(const Eigen::Ref<const Eigen::VectorXd>& x, double tol) const {
  for (std::size_t s = 0; s < simplices.size(); ++s) {
    if (barycentric(s, x).minCoeff() >= -tol) return s;
  }
  return npos;
}

SimplicialComplex path_complex(const Eigen::Ref<const Eigen::VectorXd>& points) {
  const auto n = static_cast<std::size_t>(points.size());
  if (n < 2) throw ComplexError("path_complex: need at least two points");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return points(static_cast<Eigen::Index>(a)) < points(static_cast<Eigen::Index>(b));
  });
  std::vector<std::vector<std::size_t>> simplices;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double gap = points(static_cast<Eigen::Index>(order[i + 1])) - points(static_cast<Eigen::Index>(order[i]));
    if (gap <= 1e-12) throw ComplexError("path_complex: duplicate points");
    simplices.push_back({order[i], order[i + 1]});
  }
  return SimplicialComplex::from(RowMatrix(points), std::move(simplices));
}

SimplicialComplex grid_complex(std::size_t nx, std::size_t ny) {
  if (nx == 0 || ny == 0) throw ComplexError("grid_complex: need at least one cell per axis");
  RowMatrix v((nx + 1) * (ny + 1), 2);
  const auto id = [&](std::size_t i, std::size_t j) { return j * (nx + 1) + i; };
  for (std::size_t j = 0; j <= ny; ++j) {
    for (std::size_t i = 0; i <= nx; ++i) {
      v.row(static_cast<Eigen::Index>(id(i, j))) << static_cast<double>(i) / static_cast<double>(nx),
          static_cast<double>(j) / static_cast<double>(ny);
    }
  }
  std::vector<std::vector<std::size_t>> tris;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return SimplicialComplex::from(std::move(v), std::move(tris));
}

namespace {

using Tri = std::array<std::size_t, 3>;

double cross(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Positive when d lies inside the circumcircle of the counter-clockwise
// triangle (a, b, c).
double in_circle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                 const Eigen::Vector2d& d) {
  const Eigen::Vector2d ad = a - d, bd = b - d, cd = c - d;
  const double a2 = ad.squaredNorm(), b2 = bd.squaredNorm(), c2 = cd.squaredNorm();
  return ad.x() * (bd.y() * c2 - b2 * cd.y()) - ad.y() * (bd.x() * c2 - b2 * cd.x()) +
         a2 * (bd.x() * cd.y() - bd.y() * cd.x());
}

struct Triangulator {
  std::vector<Eigen::Vector2d> p;
  std::vector<Tri> tris;

  Eigen::Vector2d at(std::size_t i) const { return p[i]; }

  void make_ccw(Tri& t) const {
    if (cross(p[t[0]], p[t[1]], p[t[2]]) < 0) std::swap(t[1], t[2]);
  }

  void insert(std::size_t k) {
    std::vector<Tri> keep, bad;
    for (const auto& t : tris) {
      (in_circle(p[t[0]], p[t[1]], p[t[2]], p[k]) > 0 ? bad : keep).push_back(t);
    }
    std::map<std::pair<std::size_t, std::size_t>, int> edges;
    for (const auto& t : bad) {
      for (int e = 0; e < 3; ++e) {
        const auto a = t[static_cast<std::size_t>(e)], b = t[static_cast<std::size_t>((e + 1) % 3)];
        ++edges[{std::min(a, b), std::max(a, b)}];
      }
    }
    for (const auto& t : bad) {
      for (int e = 0; e < 3; ++e) {
        const auto a = t[static_cast<std::size_t>(e)], b = t[static_cast<std::size_t>((e + 1) % 3)];
        if (edges[{std::min(a, b), std::max(a, b)}] == 1) {
          Tri nt{a, b, k};
          make_ccw(nt);
          keep.push_back(nt);
        }
      }
    }
    tris = std::move(keep);
  }

  // Directed boundary edges a -> b with the triangle on the left.
  std::map<std::size_t, std::size_t> boundary() const {
    std::map<std::pair<std::size_t, std::size_t>, int> directed;
    for (const auto& t : tris) {
      for (int e = 0; e < 3; ++e) directed[{t[static_cast<std::size_t>(e)], t[static_cast<std::size_t>((e + 1) % 3)]}]++;
    }
    std::map<std::size_t, std::size_t> next;
    for (const auto& [e, c] : directed) {
      if (!directed.count({e.second, e.first})) next[e.first] = e.second;
    }
    return next;
  }

  bool point_in_triangle(std::size_t q, std::size_t a, std::size_t b, std::size_t c) const {
    return cross(p[a], p[b], p[q]) > 0 && cross(p[b], p[c], p[q]) > 0 && cross(p[c], p[a], p[q]) > 0;
  }

  // Adds triangles across concave boundary vertices until the boundary is
  // the convex hull.
  void fill_to_hull(std::size_t n) {
    for (bool changed = true; changed;) {
      changed = false;
      const auto next = boundary();
      for (const auto& [a, b] : next) {
        const auto it = next.find(b);
        if (it == next.end()) continue;
        const std::size_t c = it->second;
        if (c == a || cross(p[a], p[b], p[c]) >= -1e-15) continue;
        bool empty = true;
        for (std::size_t q = 0; q < n && empty; ++q) {
          if (q != a && q != b && q != c && point_in_triangle(q, a, c, b)) empty = false;
        }
        if (!empty) continue;
        tris.push_back({a, c, b});
        changed = true;
        break;
      }
    }
  }

  void legalize(double tol) {
    for (bool flipped = true; flipped;) {
      flipped = false;
      std::map<std::pair<std::size_t, std::size_t>, std::size_t> owner;
      for (std::size_t i = 0; i < tris.size(); ++i) {
        for (int e = 0; e < 3; ++e) {
          owner[{tris[i][static_cast<std::size_t>(e)], tris[i][static_cast<std::size_t>((e + 1) % 3)]}] = i;
        }
      }
      for (std::size_t i = 0; i < tris.size() && !flipped; ++i) {
        for (int e = 0; e < 3 && !flipped; ++e) {
          const auto a = tris[i][static_cast<std::size_t>(e)], b = tris[i][static_cast<std::size_t>((e + 1) % 3)];
          const auto c = tris[i][static_cast<std::size_t>((e + 2) % 3)];
          const auto it = owner.find({b, a});
          if (it == owner.end()) continue;
          const auto& u = tris[it->second];
          std::size_t d = u[0];
          for (auto w : u) {
            if (w != a && w != b) d = w;
          }
          if (in_circle(p[a], p[b], p[c], p[d]) > tol &&
              cross(p[c], p[a], p[d]) > 0 && cross(p[d], p[b], p[c]) > 0) {
            const auto j = it->second;
            tris[i] = {c, a, d};
            tris[j] = {d, b, c};
            flipped = true;
          }
        }
      }
    }
  }
};

}  // namespace

SimplicialComplex delaunay_2d(const Eigen::Ref<const RowMatrix>& points) {
  if (points.cols() != 2) throw ComplexError("delaunay_2d: points must be 2-D");
  const auto n = static_cast<std::size_t>(points.rows());
  if (n < 3) throw ComplexError("delaunay_2d: need at least three points");
  if (!points.allFinite()) throw ComplexError("delaunay_2d: non-finite coordinates");

  // Work in normalized coordinates so the tolerances are scale free.
  const Eigen::RowVector2d lo = points.colwise().minCoeff();
  const Eigen::RowVector2d hi = points.colwise().maxCoeff();
  const double span = (hi - lo).maxCoeff();
  if (!(span > 0)) throw ComplexError("delaunay_2d: duplicate points");
  Triangulator tr;
  for (std::size_t i = 0; i < n; ++i) {
    tr.p.emplace_back(((points.row(static_cast<Eigen::Index>(i)) - lo) / span).transpose());
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if ((tr.p[i] - tr.p[j]).norm() <= 1e-12) {
        throw ComplexError("delaunay_2d: duplicate points " + std::to_string(i) + " and " + std::to_string(j));
      }
    }
  }
  {
    double best = 0.0;
    std::size_t far = 1;
    for (std::size_t i = 1; i < n; ++i) {
      if ((tr.p[i] - tr.p[0]).norm() > best) {
        best = (tr.p[i] - tr.p[0]).norm();
        far = i;
      }
    }
    double area = 0.0;
    for (std::size_t i = 0; i < n; ++i) area = std::max(area, std::abs(cross(tr.p[0], tr.p[far], tr.p[i])));
    if (area <= 1e-12) throw ComplexError("delaunay_2d: points are collinear");
  }

  constexpr double kBig = 1e3;
  tr.p.emplace_back(-kBig, -kBig);
  tr.p.emplace_back(kBig * 3, -kBig);
  tr.p.emplace_back(-kBig, kBig * 3);
  tr.tris.push_back({n, n + 1, n + 2});
  for (std::size_t k = 0; k < n; ++k) tr.insert(k);
  std::erase_if(tr.tris, [n](const Tri& t) { return t[0] >= n || t[1] >= n || t[2] >= n; });
  tr.p.resize(n);
  tr.fill_to_hull(n);
  tr.legalize(1e-12);

  std::vector<std::vector<std::size_t>> simplices;
  for (const auto& t : tr.tris) {
    if (std::abs(cross(tr.p[t[0]], tr.p[t[1]], tr.p[t[2]])) * span * span <= 1e-12) continue;
    simplices.push_back({t[0], t[1], t[2]});
  }
  std::sort(simplices.begin(), simplices.end());
  return SimplicialComplex::from(RowMatrix(points), std::move(simplices));
}

std::string complex_to_json(const SimplicialComplex& s) {
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.vertices.rows(); ++i) {
    std::vector<double> row(s.vertices.row(i).data(), s.vertices.row(i).data() + s.vertices.cols());
    j["vertices"].push_back(row);
  }
  j["simplices"] = s.simplices;
  return j.dump();
}

SimplicialComplex complex_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    const auto verts = j.at("vertices").get<std::vector<std::vector<double>>>();
    auto simplices = j.at("simplices").get<std::vector<std::vector<std::size_t>>>();
    if (verts.empty()) throw ComplexError("complex JSON: no vertices");
    RowMatrix v(static_cast<Eigen::Index>(verts.size()), static_cast<Eigen::Index>(verts[0].size()));
    for (std::size_t i = 0; i < verts.size(); ++i) {
      if (verts[i].size() != verts[0].size()) throw ComplexError("complex JSON: ragged vertex rows");
      for (std::size_t k = 0; k < verts[i].size(); ++k) {
        v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = verts[i][k];
      }
    }
    return SimplicialComplex::from(std::move(v), std::move(simplices));
  } catch (const nlohmann::json::exception& e) {
    throw ComplexError(std::string("complex JSON: ") + e.what());
  }
}

}  // namespace cae
