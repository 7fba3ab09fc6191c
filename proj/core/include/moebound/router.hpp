#pragma once

#include "moebound/experts.hpp"
#include "moebound/numerics.hpp"

namespace moebound {

struct RouterSettings {
  std::size_t top_k = 2;
  double tau = 0.5;                  // coverage threshold on raw affinities
  double lambda_load_balance = 0.01;
  double lambda_boundary = 0.1;
  double lambda_coverage = 0.1;
  double kernel_sigma = 1.0;         // affinity kernel width over ood distance

  friend bool operator==(const RouterSettings&, const RouterSettings&) = default;
};

struct RouterModel {
  MlpParams gate_net;  // embedding dim -> hidden -> num experts
  RouterSettings settings;

  friend bool operator==(const RouterModel&, const RouterModel&) = default;
};

struct RoutingDecision {
  Vec centroid_distances;  // ood score against each expert
  Vec raw_affinities;      // exp(-d^2 / (2 sigma^2)), in (0, 1]
  Vec gate_logits;
  Vec gate_weights;        // softmax over gate logits, full simplex
  std::vector<std::size_t> selected;  // indices by descending weight, ties to lower id
  Vec selected_weights;               // renormalized over `selected`, sums to 1
  double routing_entropy = 0.0;       // entropy of the full gate distribution
  double margin = 0.0;                // (d(2) - d(1)) / max(d(2), eps), clamped to [0, 1]
};

// Top-k indices of `weights` (descending weight, ties toward the lower
// index) plus the renormalized weights over that subset.
std::pair<std::vector<std::size_t>, Vec> select_top_k(const Vec& weights, std::size_t k);

// Distance margin between the two nearest expert centroids, in [0, 1].
// Near 0 means the query sits equidistant from two experts.
double distance_margin(const Vec& centroid_distances, double eps = 1e-12);

RoutingDecision route(const RouterModel& router, const std::vector<ExpertStats>& stats,
                      const Vec& embedding);

// K * sum_i f_i * P_i, where f is the fraction of top-1 assignments and P the
// mean gate weight per expert. f is treated as a constant in gradients.
double load_balance_loss(const std::vector<RoutingDecision>& batch, std::size_t num_experts);

// max(0, (1 - margin) * ln 2 - H(g)): low-entropy routing is only penalized
// when the query is near-equidistant from two expert regions.
double boundary_loss(double margin, double routing_entropy);

// max(0, tau - max_i a_i) * (ln K - H(g)): confident routing is penalized in
// proportion to how far the best affinity falls below the coverage floor.
double coverage_loss(const Vec& raw_affinities, double routing_entropy, double tau);

struct RouterLossTerms {
  double task_ce = 0.0;
  double load_balance = 0.0;
  double boundary = 0.0;
  double coverage = 0.0;
  double total = 0.0;

  friend bool operator==(const RouterLossTerms&, const RouterLossTerms&) = default;
};

struct RouterTrainHyperparams {
  std::size_t gate_hidden_dim = 16;
  std::size_t epochs = 40;
  double learning_rate = 0.1;
  std::size_t batch_size = 64;
  std::uint64_t seed = 3;
};

struct RouterTrainReport {
  std::vector<RouterLossTerms> trace;  // one entry per epoch, batch-mean terms
};

// Trains the gate over frozen embeddings and expert statistics. Supervision:
// cross entropy toward the owner only on in-domain samples, plus the
// load-balance, boundary and coverage terms. Terms with a zero lambda are
// never evaluated, so their code path cannot perturb the run.
RouterModel make_router(std::size_t embed_dim, std::size_t num_experts,
                        const RouterSettings& settings, const RouterTrainHyperparams& hp);

RouterTrainReport train_router(RouterModel& router, const MlpParams& embed_net,
                               const std::vector<ExpertStats>& stats,
                               const std::vector<LabeledExample>& train_split,
                               const RouterTrainHyperparams& hp);

}  // namespace moebound
