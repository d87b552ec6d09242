#pragma once

#include <map>
#include <string>
#include <vector>

#include "vcat/ad.hpp"

namespace vcat::objective {

/// N positive and N negative exemplar embeddings in one surrogate's visual
/// space, plus the contrastive temperature and TopK count. Positives align
/// with the target semantics, negatives with the original semantics.
struct ExemplarSet {
    std::vector<std::vector<float>> positives;
    std::vector<std::vector<float>> negatives;
    double tau = 0.1;
    int k = 10;

    int n() const { return static_cast<int>(positives.size()); }
    int dim() const { return positives.empty() ? 0 : static_cast<int>(positives.front().size()); }
    void validate() const;
};

struct LossValue {
    double value = 0.0;
    std::map<std::string, double> per_surrogate;
};

double cosine_sim(const std::vector<float>& a, const std::vector<float>& b);

/// Softmax over all 2N similarity/tau values; first N entries are positive
/// scores, last N negative. Sums to 1.
std::vector<double> contrastive_scores(const std::vector<double>& sim_pos,
                                       const std::vector<double>& sim_neg, double tau);

/// -(1/K) * sum TopK(log p+) + (1/N) * sum log p-. Ties in the TopK pick the
/// earlier index.
double visual_contrastive_loss(const std::vector<double>& sim_pos,
                               const std::vector<double>& sim_neg, double tau, int k);
double visual_contrastive_loss(const std::vector<float>& x_emb, const ExemplarSet& ex);

/// -Sim(x, t_target) + Sim(x, t_ans).
double text_baseline_loss(const std::vector<float>& x_emb,
                          const std::vector<float>& t_target_emb,
                          const std::vector<float>& t_ans_emb);

/// Indices of the K largest values, first-index tie-break, ascending output.
std::vector<int> topk_indices(const std::vector<float>& values, int k);

// Graph builders: losses as scalar nodes over an embedding node, exemplars
// entering as constants so gradient flows only through the embedding.
ad::Graph::Id vcl_op(ad::Graph& g, ad::Graph::Id emb, const ExemplarSet& ex);
ad::Graph::Id text_baseline_op(ad::Graph& g, ad::Graph::Id emb,
                               const std::vector<float>& t_target_emb,
                               const std::vector<float>& t_ans_emb);

}  // namespace vcat::objective
