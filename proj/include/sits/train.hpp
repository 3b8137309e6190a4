#pragma once

#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "sits/model.hpp"
#include "sits/rng.hpp"
#include "sits/sampling.hpp"

namespace sits {

struct OptimConfig {
    double peak_lr = 1e-3;
    double weight_decay = 0.01;
    int warmup_epochs = 0;
    int epochs = 100;
    int batch_size = 16;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double divergence_factor = 1e3;
    double stop_below = 0.0;  // early stop once epoch mean drops under this; 0 disables

    void validate() const {
        if (epochs < 1 || batch_size < 1) throw ConfigError("epochs and batch_size must be >= 1");
        if (warmup_epochs < 0 || warmup_epochs > epochs) {
            throw ConfigError("warmup_epochs must be in [0, epochs]");
        }
        if (!(peak_lr > 0.0)) throw ConfigError("peak_lr must be > 0");
    }
};

/// Linear warmup to peak, then cosine annealing to zero over the remaining
/// epochs. Epoch 0 after a zero-epoch warmup runs at peak.
inline double lr_at(int epoch, const OptimConfig& cfg) {
    if (epoch < cfg.warmup_epochs) {
        return cfg.peak_lr * (epoch + 1) / cfg.warmup_epochs;
    }
    int span = cfg.epochs - cfg.warmup_epochs - 1;
    if (span <= 0) return cfg.peak_lr;
    double t = static_cast<double>(epoch - cfg.warmup_epochs) / span;
    return cfg.peak_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

/// Decoupled-weight-decay Adam over a ParamStore. Decay applies to weight
/// matrices only (row count > 1); biases, norms and the CLS token are exempt.
template <typename S>
class AdamW {
public:
    AdamW(ParamStore<S>& params, const OptimConfig& cfg) : params_(&params), cfg_(cfg) {
        for (const auto& [name, p] : params.tensors) {
            m_[name].assign(p->size(), 0.0);
            v_[name].assign(p->size(), 0.0);
        }
    }

    void zero_grad() { params_->zero_grad(); }

    void step(double lr) {
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (auto& [name, p] : params_->tensors) {
            auto& m = m_[name];
            auto& v = v_[name];
            bool decay = p->rows > 1;
            for (std::size_t i = 0; i < p->size(); ++i) {
                double g = static_cast<double>(p->grad[i]);
                if (!std::isfinite(g)) {
                    throw TrainingDiverged("non-finite gradient in parameter '" + name + "'");
                }
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
                if (decay) update += cfg_.weight_decay * static_cast<double>(p->val[i]);
                p->val[i] -= static_cast<S>(lr * update);
            }
        }
    }

private:
    ParamStore<S>* params_;
    OptimConfig cfg_;
    std::map<std::string, std::vector<double>> m_, v_;
    long t_ = 0;
};

struct TrainResult {
    std::vector<double> epoch_mean_loss;
    int epochs_run = 0;
    bool stopped_early = false;
};

inline void write_loss_trace(const TrainResult& result, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write loss trace: " + path.string());
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_mean_loss.size(); ++e) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", e, result.epoch_mean_loss[e]);
        out << buf;
    }
}

/// Deterministic training loop: per-epoch shuffle derived from the seed,
/// sequential sample processing, AdamW step per batch. Aborts with a trace
/// when the loss leaves the stable regime.
template <typename S>
TrainResult train(PretextModel<S>& model, const PairDataset& data, const OptimConfig& cfg,
                  std::uint64_t seed, std::ostream* log = nullptr) {
    cfg.validate();
    if (data.samples.empty()) throw ConfigError("train: empty dataset");
    AdamW<S> optim(model.params(), cfg);
    TrainResult result;
    double initial_loss = -1.0;

    auto format_trace = [&]() {
        std::string s;
        for (double l : result.epoch_mean_loss) s += std::to_string(l) + " ";
        return s;
    };

    std::vector<std::size_t> order(data.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = lr_at(epoch, cfg);
        Rng shuffle_rng(derive_seed(seed, static_cast<std::uint64_t>(epoch) + 1));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            optim.zero_grad();
            ad::Ptr<S> batch_loss;
            for (std::size_t idx = start; idx < stop; ++idx) {
                auto loss = model.task_loss(data.samples[order[idx]]);
                batch_loss = batch_loss ? ad::add(batch_loss, loss) : loss;
            }
            batch_loss = ad::scale(batch_loss, S(1) / static_cast<S>(stop - start));
            double value = static_cast<double>(batch_loss->val[0]);
            if (!std::isfinite(value)) {
                throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) +
                                       "; trace: " + format_trace());
            }
            if (initial_loss < 0.0) initial_loss = std::max(value, 1e-12);
            if (value > cfg.divergence_factor * initial_loss) {
                throw TrainingDiverged("loss " + std::to_string(value) + " exceeds " +
                                       std::to_string(cfg.divergence_factor) + "x initial " +
                                       std::to_string(initial_loss) + "; trace: " + format_trace());
            }
            ad::backward(batch_loss);
            optim.step(lr);
            epoch_loss += value * static_cast<double>(stop - start);
            seen += stop - start;
        }
        epoch_loss /= static_cast<double>(seen);
        result.epoch_mean_loss.push_back(epoch_loss);
        result.epochs_run = epoch + 1;
        if (log) {
            (*log) << "epoch " << epoch << " lr " << lr << " loss " << epoch_loss << "\n";
        }
        if (cfg.stop_below > 0.0 && epoch_loss < cfg.stop_below) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

// --- finite-difference gradient checking ------------------------------------

struct GradCheckReport {
    double max_rel_err = 0.0;
    int coords_checked = 0;
    std::string worst_param;
};

/// Central-difference check of d(loss)/d(theta) on randomly chosen parameter
/// coordinates, in double precision. Relative error uses a 1e-3 scale floor
/// so near-stationary coordinates compare against finite-difference noise
/// sensibly.
inline GradCheckReport gradient_check(Task task, const ViTConfig& vit, const HeadConfig& heads,
                                      const EncodingConfig& enc, int n_coords, std::uint64_t seed,
                                      double h = 1e-4) {
    PretextModel<double> model(task, vit, heads, enc);
    model.randomize_all(derive_seed(seed, 1));

    // one deterministic sample: two random frames a few months apart
    Rng rng(derive_seed(seed, 2));
    TimeSeriesCube cube;
    cube.t = 2;
    cube.c = vit.channels;
    cube.h = cube.w = vit.image_size;
    cube.bands = kPretextBands;
    cube.bands.resize(vit.channels, "band");
    cube.timestamps = {Timestamp{2018, 4}, Timestamp{2018, 6}};
    cube.data.resize(static_cast<std::size_t>(cube.t) * cube.c * cube.h * cube.w);
    for (auto& v : cube.data) v = static_cast<float>(rng.uniform(0.05, 0.9));

    FrequencyMap fmap;
    fmap.k = heads.fp_k;
    fmap.h = fmap.w = vit.image_size;
    fmap.data.resize(static_cast<std::size_t>(fmap.k) * fmap.h * fmap.w);
    for (auto& v : fmap.data) v = static_cast<float>(rng.uniform(0.02, 0.5));

    auto sample = make_sample(cube, 0, 1, &fmap);
    auto loss_value = [&]() { return model.task_loss(sample)->val[0]; };

    model.params().zero_grad();
    auto loss = model.task_loss(sample);
    ad::backward(loss);

    // gather analytic grads, then probe coordinates
    std::vector<std::pair<std::string, ad::Ptr<double>>> tensors(model.params().tensors.begin(),
                                                                 model.params().tensors.end());
    std::size_t total = model.params().total_size();
    Rng pick(derive_seed(seed, 3));
    GradCheckReport report;
    for (int i = 0; i < n_coords; ++i) {
        std::size_t flat = pick.below(total);
        std::size_t off = flat;
        std::size_t ti = 0;
        while (off >= tensors[ti].second->size()) {
            off -= tensors[ti].second->size();
            ++ti;
        }
        auto& node = tensors[ti].second;
        double analytic = node->grad[off];
        double keep = node->val[off];
        node->val[off] = keep + h;
        double up = loss_value();
        node->val[off] = keep - h;
        double down = loss_value();
        node->val[off] = keep;
        double numeric = (up - down) / (2.0 * h);
        double rel = std::abs(analytic - numeric) /
                     std::max({std::abs(analytic), std::abs(numeric), 1e-3});
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_param = tensors[ti].first;
        }
        ++report.coords_checked;
    }
    return report;
}

// --- linear probe -------------------------------------------------------------

struct ProbeResult {
    double mean_iou = 0.0;
    double iou_class0 = 0.0;
    double iou_class1 = 0.0;
    double accuracy = 0.0;
};

/// Trains a 2-class logistic head on frozen encoder patch tokens (labels
/// taken per pixel, token logits broadcast over the patch) and reports IoU
/// on a held-out cube.
inline ProbeResult linear_probe(const PretextModel<float>& model,
                                const TimeSeriesCube& train_cube,
                                const std::vector<std::uint16_t>& train_labels,
                                const TimeSeriesCube& eval_cube,
                                const std::vector<std::uint16_t>& eval_labels, int steps,
                                double lr, std::uint64_t seed) {
    const auto& vit = model.vit();
    if (train_cube.h != vit.image_size || train_cube.w != vit.image_size ||
        eval_cube.h != vit.image_size || eval_cube.w != vit.image_size) {
        throw ConfigError("probe cubes must match the encoder image size");
    }
    for (auto l : train_labels) {
        if (l > 1) throw ConfigError("probe labels must be 2-class (0/1)");
    }
    int n = vit.num_patches(), d = vit.dim, ps = vit.patch_size;
    int side = vit.patches_per_side();

    // frozen features: one row per (frame, patch), plus per-token class counts
    auto extract = [&](const TimeSeriesCube& cube, const std::vector<std::uint16_t>& labels,
                       std::vector<float>& feats, std::vector<double>& counts) {
        for (int ti = 0; ti < cube.t; ++ti) {
            auto z = model.encode(cube.frame(ti));
            for (int p = 0; p < n; ++p) {
                const float* row = z->val.data() + static_cast<std::size_t>(p + 1) * d;
                feats.insert(feats.end(), row, row + d);
                int py = p / side, px = p % side;
                double c1 = 0.0;
                for (int y = 0; y < ps; ++y) {
                    for (int x = 0; x < ps; ++x) {
                        c1 += labels[static_cast<std::size_t>(py * ps + y) * cube.w + px * ps + x];
                    }
                }
                counts.push_back(ps * ps - c1);
                counts.push_back(c1);
            }
        }
    };
    std::vector<float> feats;
    std::vector<double> counts;
    extract(train_cube, train_labels, feats, counts);
    std::size_t tokens = counts.size() / 2;

    // logistic regression, full-batch Adam
    Rng rng(seed);
    std::vector<double> w(static_cast<std::size_t>(d) * 2), b(2, 0.0);
    for (auto& v : w) v = rng.truncated_normal(0.0, 0.01);
    std::vector<double> mw(w.size(), 0.0), vw(w.size(), 0.0), mb(2, 0.0), vb(2, 0.0);
    double total_px = 0.0;
    for (double c : counts) total_px += c;
    for (int step = 1; step <= steps; ++step) {
        std::vector<double> gw(w.size(), 0.0), gb(2, 0.0);
        for (std::size_t tk = 0; tk < tokens; ++tk) {
            const float* f = feats.data() + tk * d;
            double logit0 = b[0], logit1 = b[1];
            for (int j = 0; j < d; ++j) {
                logit0 += f[j] * w[j * 2];
                logit1 += f[j] * w[j * 2 + 1];
            }
            double mx = std::max(logit0, logit1);
            double e0 = std::exp(logit0 - mx), e1 = std::exp(logit1 - mx);
            double z = e0 + e1;
            double tot = counts[tk * 2] + counts[tk * 2 + 1];
            double d0 = (e0 / z) * tot - counts[tk * 2];
            double d1 = (e1 / z) * tot - counts[tk * 2 + 1];
            for (int j = 0; j < d; ++j) {
                gw[j * 2] += f[j] * d0;
                gw[j * 2 + 1] += f[j] * d1;
            }
            gb[0] += d0;
            gb[1] += d1;
        }
        double bc1 = 1.0 - std::pow(0.9, step), bc2 = 1.0 - std::pow(0.999, step);
        auto adam = [&](std::vector<double>& p, std::vector<double>& g, std::vector<double>& m,
                        std::vector<double>& v) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                g[i] /= total_px;
                m[i] = 0.9 * m[i] + 0.1 * g[i];
                v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
                p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8);
            }
        };
        adam(w, gw, mw, vw);
        adam(b, gb, mb, vb);
    }

    // evaluate per pixel on the held-out cube
    std::vector<float> efeats;
    std::vector<double> ecounts;
    extract(eval_cube, eval_labels, efeats, ecounts);
    std::size_t etokens = ecounts.size() / 2;
    double inter[2] = {0, 0}, pred_px[2] = {0, 0}, true_px[2] = {0, 0};
    double correct = 0, total = 0;
    for (std::size_t tk = 0; tk < etokens; ++tk) {
        const float* f = efeats.data() + tk * d;
        double logit0 = b[0], logit1 = b[1];
        for (int j = 0; j < d; ++j) {
            logit0 += f[j] * w[j * 2];
            logit1 += f[j] * w[j * 2 + 1];
        }
        int pred = logit1 > logit0 ? 1 : 0;  // predicted class covers the whole patch
        double c0 = ecounts[tk * 2], c1 = ecounts[tk * 2 + 1];
        double hit = pred == 1 ? c1 : c0;
        correct += hit;
        total += c0 + c1;
        inter[pred] += hit;
        pred_px[pred] += c0 + c1;
        true_px[0] += c0;
        true_px[1] += c1;
    }
    ProbeResult res;
    double uni0 = pred_px[0] + true_px[0] - inter[0];
    double uni1 = pred_px[1] + true_px[1] - inter[1];
    res.iou_class0 = uni0 > 0 ? inter[0] / uni0 : 1.0;
    res.iou_class1 = uni1 > 0 ? inter[1] / uni1 : 1.0;
    res.mean_iou = 0.5 * (res.iou_class0 + res.iou_class1);
    res.accuracy = total > 0 ? correct / total : 0.0;
    return res;
}

}  // namespace sits
