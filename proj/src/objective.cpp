#include "vcat/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vcat::objective {

using ad::Graph;

void ExemplarSet::validate() const {
    if (positives.empty() || negatives.empty())
        throw std::invalid_argument("exemplars: need at least one positive and one negative");
    if (positives.size() != negatives.size())
        throw std::invalid_argument("exemplars: positive/negative counts differ");
    if (tau <= 0.0) throw std::invalid_argument("exemplars: tau must be positive");
    if (k < 1 || k > n()) throw std::invalid_argument("exemplars: K must lie in [1, N]");
    const size_t d = positives.front().size();
    for (const auto& v : positives)
        if (v.size() != d) throw std::invalid_argument("exemplars: inconsistent dimensions");
    for (const auto& v : negatives)
        if (v.size() != d) throw std::invalid_argument("exemplars: inconsistent dimensions");
}

double cosine_sim(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("cosine_sim: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_sim: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> contrastive_scores(const std::vector<double>& sim_pos,
                                       const std::vector<double>& sim_neg, double tau) {
    if (sim_pos.empty() || sim_neg.empty())
        throw std::invalid_argument("contrastive_scores: empty similarity set");
    if (tau <= 0.0) throw std::invalid_argument("contrastive_scores: tau must be positive");
    std::vector<double> logits;
    logits.reserve(sim_pos.size() + sim_neg.size());
    for (double s : sim_pos) logits.push_back(s / tau);
    for (double s : sim_neg) logits.push_back(s / tau);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    std::vector<double> p(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - mx) / z;
    return p;
}

double visual_contrastive_loss(const std::vector<double>& sim_pos,
                               const std::vector<double>& sim_neg, double tau, int k) {
    const int n = static_cast<int>(sim_pos.size());
    if (static_cast<int>(sim_neg.size()) != n)
        throw std::invalid_argument("vcl: positive/negative counts differ");
    if (k < 1 || k > n) throw std::invalid_argument("vcl: K must lie in [1, N]");
    std::vector<double> p = contrastive_scores(sim_pos, sim_neg, tau);
    std::vector<double> logp_pos(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) logp_pos[static_cast<size_t>(i)] = std::log(p[static_cast<size_t>(i)]);

    // K largest log-probabilities, earlier index wins ties.
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return logp_pos[static_cast<size_t>(a)] > logp_pos[static_cast<size_t>(b)];
    });
    double top = 0.0;
    for (int i = 0; i < k; ++i) top += logp_pos[static_cast<size_t>(order[static_cast<size_t>(i)])];

    double neg = 0.0;
    for (int i = 0; i < n; ++i) neg += std::log(p[static_cast<size_t>(n + i)]);
    return -top / k + neg / n;
}

double visual_contrastive_loss(const std::vector<float>& x_emb, const ExemplarSet& ex) {
    ex.validate();
    std::vector<double> sp(static_cast<size_t>(ex.n())), sn(static_cast<size_t>(ex.n()));
    for (int i = 0; i < ex.n(); ++i) {
        sp[static_cast<size_t>(i)] = cosine_sim(x_emb, ex.positives[static_cast<size_t>(i)]);
        sn[static_cast<size_t>(i)] = cosine_sim(x_emb, ex.negatives[static_cast<size_t>(i)]);
    }
    return visual_contrastive_loss(sp, sn, ex.tau, ex.k);
}

double text_baseline_loss(const std::vector<float>& x_emb,
                          const std::vector<float>& t_target_emb,
                          const std::vector<float>& t_ans_emb) {
    return -cosine_sim(x_emb, t_target_emb) + cosine_sim(x_emb, t_ans_emb);
}

std::vector<int> topk_indices(const std::vector<float>& values, int k) {
    const int n = static_cast<int>(values.size());
    if (k < 1 || k > n) throw std::invalid_argument("topk: K must lie in [1, N]");
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return values[static_cast<size_t>(a)] > values[static_cast<size_t>(b)];
    });
    order.resize(static_cast<size_t>(k));
    std::sort(order.begin(), order.end());
    return order;
}

namespace {

Graph::Id rows_const(Graph& g, const std::vector<std::vector<float>>& rows) {
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows.front().size());
    std::vector<float> flat;
    flat.reserve(static_cast<size_t>(n) * d);
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != d)
            throw std::invalid_argument("exemplars: inconsistent dimensions");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return g.constant({n, d}, std::move(flat));
}

}  // namespace

Graph::Id vcl_op(Graph& g, Graph::Id emb, const ExemplarSet& ex) {
    ex.validate();
    const int n = ex.n();
    Graph::Id sim_pos = g.cosine_rows(emb, rows_const(g, ex.positives));
    Graph::Id sim_neg = g.cosine_rows(emb, rows_const(g, ex.negatives));
    Graph::Id logits = g.scale(g.concat_vec(sim_pos, sim_neg), static_cast<float>(1.0 / ex.tau));
    Graph::Id logp = g.log_softmax(logits);

    auto lp = g.val(logp);
    std::vector<float> pos_vals(lp.begin(), lp.begin() + n);
    std::vector<int> sel = topk_indices(pos_vals, ex.k);
    Graph::Id top_term = g.mean(g.select(logp, sel));

    std::vector<int> neg_idx(static_cast<size_t>(n));
    std::iota(neg_idx.begin(), neg_idx.end(), n);
    Graph::Id neg_term = g.mean(g.select(logp, neg_idx));
    return g.add(g.neg(top_term), neg_term);
}

Graph::Id text_baseline_op(Graph& g, Graph::Id emb, const std::vector<float>& t_target_emb,
                           const std::vector<float>& t_ans_emb) {
    if (t_target_emb.size() != t_ans_emb.size())
        throw std::invalid_argument("text_baseline: embedding dimension mismatch");
    Graph::Id sims = g.cosine_rows(emb, rows_const(g, {t_target_emb, t_ans_emb}));
    Graph::Id st = g.select(sims, {0});
    Graph::Id sa = g.select(sims, {1});
    return g.sum(g.sub(sa, st));
}

}  // namespace vcat::objective
