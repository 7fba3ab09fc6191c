#include "moebound/router.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace moebound {

std::pair<std::vector<std::size_t>, Vec> select_top_k(const Vec& weights, std::size_t k) {
  if (weights.empty()) throw DimensionError("select_top_k: empty weights");
  if (k == 0 || k > weights.size()) {
    throw ParameterError("select_top_k: k = " + std::to_string(k) + " with " +
                         std::to_string(weights.size()) + " experts");
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (weights[a] != weights[b]) return weights[a] > weights[b];
    return a < b;
  });
  order.resize(k);
  Vec sub(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sub[i] = weights[order[i]];
    sum += sub[i];
  }
  if (!(sum > 0.0)) throw DomainError("select_top_k: selected weights sum to zero");
  for (double& w : sub) w /= sum;
  return {std::move(order), std::move(sub)};
}

double distance_margin(const Vec& centroid_distances, double eps) {
  if (centroid_distances.size() < 2) {
    throw DimensionError("distance_margin: need at least two experts");
  }
  double d1 = centroid_distances[0], d2 = centroid_distances[1];
  if (d2 < d1) std::swap(d1, d2);
  for (std::size_t i = 2; i < centroid_distances.size(); ++i) {
    double d = centroid_distances[i];
    if (d < d1) {
      d2 = d1;
      d1 = d;
    } else if (d < d2) {
      d2 = d;
    }
  }
  double m = (d2 - d1) / std::max(d2, eps);
  return std::clamp(m, 0.0, 1.0);
}

RoutingDecision route(const RouterModel& router, const std::vector<ExpertStats>& stats,
                      const Vec& embedding) {
  std::size_t k_experts = router.gate_net.output_dim();
  if (stats.size() != k_experts) {
    throw DimensionError("route: " + std::to_string(stats.size()) + " expert stats vs gate over " +
                         std::to_string(k_experts));
  }
  RoutingDecision d;
  d.centroid_distances.resize(k_experts);
  d.raw_affinities.resize(k_experts);
  double two_sigma_sq = 2.0 * router.settings.kernel_sigma * router.settings.kernel_sigma;
  for (std::size_t i = 0; i < k_experts; ++i) {
    double dist = ood_score(stats[i], embedding);
    d.centroid_distances[i] = dist;
    d.raw_affinities[i] = std::exp(-dist * dist / two_sigma_sq);
  }
  d.gate_logits = mlp_forward(router.gate_net, embedding);
  d.gate_weights = softmax(d.gate_logits);
  auto [sel, sub] = select_top_k(d.gate_weights, router.settings.top_k);
  d.selected = std::move(sel);
  d.selected_weights = std::move(sub);
  d.routing_entropy = entropy(d.gate_weights);
  d.margin = distance_margin(d.centroid_distances);
  return d;
}

double load_balance_loss(const std::vector<RoutingDecision>& batch, std::size_t num_experts) {
  if (batch.empty()) throw DimensionError("load_balance_loss: empty batch");
  Vec top1_fraction(num_experts, 0.0);
  Vec mean_weight(num_experts, 0.0);
  for (const RoutingDecision& d : batch) {
    if (d.gate_weights.size() != num_experts) {
      throw DimensionError("load_balance_loss: decision over wrong expert count");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < num_experts; ++i) {
      if (d.gate_weights[i] > d.gate_weights[best]) best = i;
    }
    top1_fraction[best] += 1.0;
    for (std::size_t i = 0; i < num_experts; ++i) mean_weight[i] += d.gate_weights[i];
  }
  double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < num_experts; ++i) {
    loss += (top1_fraction[i] * inv) * (mean_weight[i] * inv);
  }
  return loss * static_cast<double>(num_experts);
}

double boundary_loss(double margin, double routing_entropy) {
  if (!(margin >= 0.0 && margin <= 1.0)) {
    throw DomainError("boundary_loss: margin outside [0, 1]");
  }
  constexpr double kLn2 = 0.69314718055994530941723212145818;
  double target = (1.0 - margin) * kLn2;
  double defect = target - routing_entropy;
  return defect > 0.0 ? defect : 0.0;
}

double coverage_loss(const Vec& raw_affinities, double routing_entropy, double tau) {
  if (raw_affinities.empty()) throw DimensionError("coverage_loss: no affinities");
  double best = *std::max_element(raw_affinities.begin(), raw_affinities.end());
  double defect = tau - best;
  if (defect <= 0.0) return 0.0;
  double head = std::log(static_cast<double>(raw_affinities.size())) - routing_entropy;
  return defect * head;
}

namespace {

void validate_settings(const RouterSettings& s, std::size_t num_experts) {
  if (s.top_k == 0 || s.top_k > num_experts) {
    throw ParameterError("router: top_k = " + std::to_string(s.top_k) + " with " +
                         std::to_string(num_experts) + " experts");
  }
  if (!(s.tau >= 0.0 && s.tau <= 1.0)) throw ParameterError("router: tau must lie in [0, 1]");
  if (!(s.kernel_sigma > 0.0)) throw ParameterError("router: kernel_sigma must be positive");
  if (s.lambda_load_balance < 0.0 || s.lambda_boundary < 0.0 || s.lambda_coverage < 0.0) {
    throw ParameterError("router: loss weights must be non-negative");
  }
}

}  // namespace

RouterModel make_router(std::size_t embed_dim, std::size_t num_experts,
                        const RouterSettings& settings, const RouterTrainHyperparams& hp) {
  if (num_experts < 2) throw ParameterError("make_router: need at least two experts");
  validate_settings(settings, num_experts);
  RouterModel router;
  router.settings = settings;
  Rng init_rng = Rng(hp.seed).split(1);
  router.gate_net = make_mlp({embed_dim, hp.gate_hidden_dim, num_experts}, init_rng);
  return router;
}

RouterTrainReport train_router(RouterModel& router, const MlpParams& embed_net,
                               const std::vector<ExpertStats>& stats,
                               const std::vector<LabeledExample>& train_split,
                               const RouterTrainHyperparams& hp) {
  std::size_t num_experts = router.gate_net.output_dim();
  validate_settings(router.settings, num_experts);
  if (train_split.empty()) throw TrainingError("train_router: empty training split");
  if (hp.batch_size == 0 || hp.epochs == 0) {
    throw ParameterError("train_router: batch_size and epochs must be positive");
  }

  // The embedding net and expert statistics are frozen here, so distances,
  // affinities and margins are constants of each sample.
  struct SampleCtx {
    Vec embedding;
    Vec affinities;
    double margin;
    int owner;
  };
  std::vector<SampleCtx> ctx;
  ctx.reserve(train_split.size());
  double two_sigma_sq = 2.0 * router.settings.kernel_sigma * router.settings.kernel_sigma;
  std::size_t in_domain_total = 0;
  for (const LabeledExample& ex : train_split) {
    SampleCtx c;
    c.embedding = mlp_forward(embed_net, ex.features);
    Vec dist(num_experts);
    c.affinities.resize(num_experts);
    for (std::size_t i = 0; i < num_experts; ++i) {
      dist[i] = ood_score(stats[i], c.embedding);
      c.affinities[i] = std::exp(-dist[i] * dist[i] / two_sigma_sq);
    }
    c.margin = distance_margin(dist);
    c.owner = ex.case_tag == CaseTag::kInDomain ? ex.owner_domain : kGapOwner;
    if (c.owner != kGapOwner) in_domain_total += 1;
    ctx.push_back(std::move(c));
  }
  if (in_domain_total == 0) {
    throw TrainingError("train_router: no in-domain samples to supervise the gate");
  }

  double lam_lb = router.settings.lambda_load_balance;
  double lam_b = router.settings.lambda_boundary;
  double lam_c = router.settings.lambda_coverage;
  double tau = router.settings.tau;
  double ln_k = std::log(static_cast<double>(num_experts));

  Rng shuffle_rng = Rng(hp.seed).split(2);
  std::vector<std::size_t> order(ctx.size());
  std::iota(order.begin(), order.end(), 0);
  OptimizerState opt{hp.learning_rate, 0};
  RouterTrainReport report;

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    RouterLossTerms epoch_terms;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      std::size_t end = std::min(order.size(), start + hp.batch_size);
      std::size_t bsz = end - start;
      double inv_b = 1.0 / static_cast<double>(bsz);

      struct Fwd {
        ForwardCache cache;
        Vec weights;
        double h;
      };
      std::vector<Fwd> fwd(bsz);
      std::size_t in_domain = 0;
      for (std::size_t i = 0; i < bsz; ++i) {
        const SampleCtx& c = ctx[order[start + i]];
        Vec logits = mlp_forward(router.gate_net, c.embedding, &fwd[i].cache);
        fwd[i].weights = softmax(logits);
        fwd[i].h = entropy(fwd[i].weights);
        if (c.owner != kGapOwner) in_domain += 1;
      }

      // Load-balance statistics over the whole batch.
      Vec top1_fraction(num_experts, 0.0);
      Vec mean_weight(num_experts, 0.0);
      if (lam_lb != 0.0) {
        for (const Fwd& f : fwd) {
          std::size_t best = 0;
          for (std::size_t j = 1; j < num_experts; ++j) {
            if (f.weights[j] > f.weights[best]) best = j;
          }
          top1_fraction[best] += inv_b;
          for (std::size_t j = 0; j < num_experts; ++j) mean_weight[j] += f.weights[j] * inv_b;
        }
      }

      RouterLossTerms terms;
      MlpParams grads = zeros_like(router.gate_net);
      for (std::size_t i = 0; i < bsz; ++i) {
        const SampleCtx& c = ctx[order[start + i]];
        const Fwd& f = fwd[i];
        Vec dz(num_experts, 0.0);

        if (c.owner != kGapOwner && in_domain > 0) {
          double inv_in = 1.0 / static_cast<double>(in_domain);
          double p = std::max(f.weights[static_cast<std::size_t>(c.owner)], 1e-300);
          terms.task_ce += -std::log(p) * inv_in;
          for (std::size_t j = 0; j < num_experts; ++j) {
            dz[j] += f.weights[j] * inv_in;
          }
          dz[static_cast<std::size_t>(c.owner)] -= inv_in;
        }

        if (lam_lb != 0.0) {
          double dot = 0.0;
          for (std::size_t j = 0; j < num_experts; ++j) dot += top1_fraction[j] * f.weights[j];
          double scale = lam_lb * static_cast<double>(num_experts) * inv_b;
          for (std::size_t j = 0; j < num_experts; ++j) {
            dz[j] += scale * f.weights[j] * (top1_fraction[j] - dot);
          }
        }

        // Entropy gradient through the softmax: dH/dz_j = -g_j (ln g_j + H).
        if (lam_b != 0.0) {
          double lb = boundary_loss(c.margin, f.h);
          terms.boundary += lb * inv_b;
          if (lb > 0.0) {
            for (std::size_t j = 0; j < num_experts; ++j) {
              double g = f.weights[j];
              dz[j] += lam_b * inv_b * g * (std::log(std::max(g, 1e-300)) + f.h);
            }
          }
        }
        if (lam_c != 0.0) {
          double best = *std::max_element(c.affinities.begin(), c.affinities.end());
          double defect = tau - best;
          if (defect > 0.0) {
            terms.coverage += defect * (ln_k - f.h) * inv_b;
            for (std::size_t j = 0; j < num_experts; ++j) {
              double g = f.weights[j];
              dz[j] += lam_c * inv_b * defect * g * (std::log(std::max(g, 1e-300)) + f.h);
            }
          }
        }

        accumulate(grads, mlp_backward(router.gate_net, f.cache, dz), 1.0);
      }

      if (lam_lb != 0.0) {
        double lb = 0.0;
        for (std::size_t j = 0; j < num_experts; ++j) lb += top1_fraction[j] * mean_weight[j];
        terms.load_balance = lb * static_cast<double>(num_experts);
      }
      terms.total = terms.task_ce + lam_lb * terms.load_balance + lam_b * terms.boundary +
                    lam_c * terms.coverage;
      sgd_step(router.gate_net, grads, opt);

      epoch_terms.task_ce += terms.task_ce;
      epoch_terms.load_balance += terms.load_balance;
      epoch_terms.boundary += terms.boundary;
      epoch_terms.coverage += terms.coverage;
      epoch_terms.total += terms.total;
      batches += 1;
    }
    double inv = 1.0 / static_cast<double>(batches);
    epoch_terms.task_ce *= inv;
    epoch_terms.load_balance *= inv;
    epoch_terms.boundary *= inv;
    epoch_terms.coverage *= inv;
    epoch_terms.total *= inv;
    if (!std::isfinite(epoch_terms.total)) {
      throw TrainingError("train_router: loss diverged at epoch " + std::to_string(epoch));
    }
    report.trace.push_back(epoch_terms);
  }
  return report;
}

}  // namespace moebound
