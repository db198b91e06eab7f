#include "msp/sampling.hpp"

#include "oracle_helpers.hpp"

#include <doctest.h>

#include <numeric>
#include <queue>

using namespace msp;

namespace {

Multigraph cycle_graph(int n) {
  std::vector<EdgeTriple> edges;
  for (int i = 0; i < n; ++i) {
    edges.push_back({i, (i + 1) % n, 1.0});
    edges.push_back({(i + 1) % n, i, 1.0});
  }
  Multigraph mg;
  mg.n_nodes = n;
  mg.operators.push_back(build_shift_operator(n, edges, OperatorKind::adjacency));
  return mg;
}

Multigraph path_graph(int n) {
  std::vector<EdgeTriple> edges;
  for (int i = 0; i + 1 < n; ++i) {
    edges.push_back({i, i + 1, 1.0});
    edges.push_back({i + 1, i, 1.0});
  }
  Multigraph mg;
  mg.n_nodes = n;
  mg.operators.push_back(build_shift_operator(n, edges, OperatorKind::adjacency));
  return mg;
}

// BFS hop distances on the support of one operator (undirected).
std::vector<int> bfs_hops(const Matrix& s, int source) {
  const int n = static_cast<int>(s.rows());
  std::vector<int> dist(n, -1);
  std::queue<int> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v = 0; v < n; ++v) {
      if (dist[v] < 0 && (std::abs(s(u, v)) > 1e-12 || std::abs(s(v, u)) > 1e-12)) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  return dist;
}

}  // namespace

TEST_CASE("select_nodes") {
  SUBCASE("full counts give the identity plan for any method") {
    const auto mg = cycle_graph(5);
    for (const auto method :
         {SelectionMethod::degree, SelectionMethod::random, SelectionMethod::coverage}) {
      const auto plan = select_nodes(mg, {5, 5}, method, 3);
      CHECK(plan.counts == std::vector<int>{5, 5, 5});
      std::vector<int> sorted = plan.node_order;
      std::sort(sorted.begin(), sorted.end());
      CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4});
    }
  }
  SUBCASE("degree method picks the star center first") {
    Multigraph star;
    star.n_nodes = 4;
    star.operators.push_back(build_shift_operator(
        4, {{0, 1, 1.0}, {1, 0, 1.0}, {0, 2, 1.0}, {2, 0, 1.0}, {0, 3, 1.0}, {3, 0, 1.0}},
        OperatorKind::adjacency));
    const auto plan = select_nodes(star, {1}, SelectionMethod::degree, 0);
    CHECK(plan.node_order[0] == 0);
  }
  SUBCASE("coverage on a 6-cycle selects antipodal nodes") {
    const auto mg = cycle_graph(6);
    const auto plan = select_nodes(mg, {2}, SelectionMethod::coverage, 0);
    const int a = plan.node_order[0];
    const int b = plan.node_order[1];
    const auto dist = bfs_hops(mg.operators[0].matrix, a);
    CHECK(dist[b] == 3);  // brute-force max-min distance on C6 is 3
  }
  SUBCASE("random method is seed-deterministic") {
    const auto mg = cycle_graph(7);
    const auto p1 = select_nodes(mg, {4, 2}, SelectionMethod::random, 42);
    const auto p2 = select_nodes(mg, {4, 2}, SelectionMethod::random, 42);
    CHECK(p1.node_order == p2.node_order);
  }
  SUBCASE("count validation") {
    const auto mg = cycle_graph(4);
    CHECK_THROWS(select_nodes(mg, {2, 3}, SelectionMethod::degree, 0));
    CHECK_THROWS(select_nodes(mg, {5}, SelectionMethod::degree, 0));
  }
}

TEST_CASE("sampling matrices") {
  SelectionPlan plan;
  plan.node_order = {0, 1, 2, 3};
  plan.counts = {4, 2, 2};
  SUBCASE("N=4, N1=2 gives the definitional D1") {
    const auto [d, e] = sampling_matrices(plan, 1);
    Matrix expected(2, 4);
    expected << 1, 0, 0, 0, 0, 1, 0, 0;
    CHECK(d == expected);
    CHECK(e == expected);
  }
  SUBCASE("equal counts give the identity") {
    const auto [d, e] = sampling_matrices(plan, 2);
    CHECK(d == Matrix::Identity(2, 2));
  }
  SUBCASE("D Dᵀ = I for all plans") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      SelectionPlan p;
      const int n = 3 + static_cast<int>(rng.uniform_int(0, 5));
      p.node_order = rng.permutation(n);
      const int n1 = 1 + static_cast<int>(rng.uniform_int(0, n - 1));
      const int n2 = 1 + static_cast<int>(rng.uniform_int(0, n1 - 1));
      p.counts = {n, n1, n2};
      for (int level = 1; level <= 2; ++level) {
        const auto [d, e] = sampling_matrices(p, level);
        CHECK((d * d.transpose() - Matrix::Identity(d.rows(), d.rows())).cwiseAbs().maxCoeff() ==
              0.0);
        CHECK((e * e.transpose() - Matrix::Identity(e.rows(), e.rows())).cwiseAbs().maxCoeff() ==
              0.0);
      }
    }
  }
}

TEST_CASE("pooled operators") {
  SUBCASE("full selection returns the original operators") {
    const auto mg = cycle_graph(5);
    const auto plan = SelectionPlan::full(5, 2);
    const auto ops = pooled_operators(plan, mg, 1);
    CHECK(ops[0] == mg.operators[0].matrix);
  }
  SUBCASE("3-node path keeping {0,1} is the leading principal submatrix") {
    const auto mg = path_graph(3);
    SelectionPlan plan;
    plan.node_order = {0, 1, 2};
    plan.counts = {3, 2};
    const auto ops = pooled_operators(plan, mg, 1);
    CHECK(ops[0] == mg.operators[0].matrix.topLeftCorner(2, 2));
  }
  SUBCASE("nested consistency: pooling to N2 directly equals pooling via N1") {
    Rng rng(9);
    const auto mg = oracle::random_normalized_multigraph(rng, 6, 2);
    SelectionPlan plan;
    plan.node_order = rng.permutation(6);
    plan.counts = {6, 4, 2};
    const auto at2 = pooled_operators(plan, mg, 2);
    // Route through level 1 explicitly: D2 S1 D2ᵀ.
    const auto at1 = pooled_operators(plan, mg, 1);
    const auto [d2, e2] = sampling_matrices(plan, 2);
    for (int g = 0; g < 2; ++g) {
      CHECK((at2[g] - d2 * at1[g] * d2.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("neighborhoods") {
  SUBCASE("alpha = 0 is the node itself") {
    const auto mg = cycle_graph(6);
    const auto plan = SelectionPlan::full(6, 1);
    CHECK(neighborhood(plan, mg, 1, 2, 0, 0) == std::vector<int>{2});
    CHECK(multigraph_neighborhood(plan, mg, 1, 2, 0) == std::vector<int>{2});
  }
  SUBCASE("4-cycle full selection alpha=1 is the closed ring neighborhood") {
    const auto mg = cycle_graph(4);
    const auto plan = SelectionPlan::full(4, 1);
    CHECK(neighborhood(plan, mg, 1, 0, 0, 1) == std::vector<int>{0, 1, 3});
  }
  SUBCASE("6-path with selection {0,2,4} matches the BFS oracle") {
    const auto mg = path_graph(6);
    SelectionPlan plan;
    plan.node_order = {0, 2, 4, 1, 3, 5};
    plan.counts = {6, 3};
    const int alpha = 2;
    for (int i = 0; i < 3; ++i) {
      const auto got = neighborhood(plan, mg, 1, i, 0, alpha);
      // Oracle: BFS in original coordinates, intersect the full previous
      // level (all 6 nodes in plan order), keep hops <= alpha.
      const int original = plan.node_order[i];
      const auto hops = bfs_hops(mg.operators[0].matrix, original);
      std::vector<int> expected;
      for (int j = 0; j < 6; ++j) {
        const int orig_j = plan.node_order[j];
        if (hops[orig_j] >= 0 && hops[orig_j] <= alpha) expected.push_back(j);
      }
      CHECK(got == expected);
    }
  }
  SUBCASE("monotone in alpha") {
    const auto mg = path_graph(7);
    const auto plan = SelectionPlan::full(7, 1);
    for (int alpha = 0; alpha < 3; ++alpha) {
      const auto small = multigraph_neighborhood(plan, mg, 1, 3, alpha);
      const auto large = multigraph_neighborhood(plan, mg, 1, 3, alpha + 1);
      CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
    }
  }
  SUBCASE("disjoint-support classes union strictly larger than either") {
    // Two edge-disjoint out-paths from node 0.
    Multigraph mg;
    mg.n_nodes = 5;
    mg.operators.push_back(build_shift_operator(
        5, {{0, 1, 1.0}, {1, 0, 1.0}}, OperatorKind::adjacency));
    mg.operators.push_back(build_shift_operator(
        5, {{0, 3, 1.0}, {3, 0, 1.0}}, OperatorKind::adjacency));
    const auto plan = SelectionPlan::full(5, 1);
    const auto n0 = neighborhood(plan, mg, 1, 0, 0, 1);
    const auto n1 = neighborhood(plan, mg, 1, 0, 1, 1);
    const auto both = multigraph_neighborhood(plan, mg, 1, 0, 1);
    CHECK(n0 == std::vector<int>{0, 1});
    CHECK(n1 == std::vector<int>{0, 3});
    CHECK(both == std::vector<int>{0, 1, 3});
  }
}

TEST_CASE("pool_signal") {
  SUBCASE("singleton neighborhoods reproduce the sampled rows") {
    Matrix x(4, 2);
    x << 1, 2, 3, 4, 5, 6, 7, 8;
    const auto out = pool_signal(x, {{0}, {2}}, Aggregator::mean);
    CHECK(out.row(0) == x.row(0));
    CHECK(out.row(1) == x.row(2));
  }
  SUBCASE("max of a constant signal is the constant") {
    const Matrix x = Matrix::Constant(5, 3, 2.5);
    const auto out = pool_signal(x, {{0, 1, 2}, {3, 4}}, Aggregator::max);
    CHECK((out.array() == 2.5).all());
  }
  SUBCASE("mean arithmetic") {
    Matrix x(2, 1);
    x << 1, 3;
    const auto out = pool_signal(x, {{0, 1}}, Aggregator::mean);
    CHECK(out(0, 0) == 2.0);
  }
  SUBCASE("median with even and odd counts") {
    Matrix x(4, 1);
    x << 4, 1, 3, 2;
    CHECK(pool_signal(x, {{0, 1, 2}}, Aggregator::median)(0, 0) == 3.0);
    CHECK(pool_signal(x, {{0, 1, 2, 3}}, Aggregator::median)(0, 0) == 2.5);
  }
  SUBCASE("permutation covariance under consistent relabeling") {
    Rng rng(31);
    const auto mg = oracle::random_normalized_multigraph(rng, 6, 2);
    const Matrix x = oracle::random_matrix(rng, 6, 2);
    const Permutation p{rng.permutation(6)};
    const auto [pmg, px] = permute(mg, x, p);
    for (const auto agg : {Aggregator::mean, Aggregator::median, Aggregator::max}) {
      // Plan selecting all nodes; relabeled plan composes the permutation.
      const auto plan = SelectionPlan::full(6, 1);
      std::vector<std::vector<int>> nbhds, pnbhds;
      for (int i = 0; i < 6; ++i) {
        nbhds.push_back(multigraph_neighborhood(plan, mg, 1, i, 1));
      }
      SelectionPlan pplan = plan;  // same identity order over the permuted graph
      for (int i = 0; i < 6; ++i) {
        pnbhds.push_back(multigraph_neighborhood(pplan, pmg, 1, i, 1));
      }
      const Matrix pooled = pool_signal(x, nbhds, agg);
      const Matrix ppooled = pool_signal(px, pnbhds, agg);
      // Row a of the permuted pooling equals row perm[a] of the original.
      for (int a = 0; a < 6; ++a) {
        CHECK((ppooled.row(a) - pooled.row(p.perm[a])).cwiseAbs().maxCoeff() <= 1e-12);
      }
    }
  }
  SUBCASE("empty neighborhood throws") {
    CHECK_THROWS(pool_signal(Matrix::Zero(2, 1), {{}}, Aggregator::mean));
  }
}
