#pragma once

#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sits/autodiff.hpp"
#include "sits/core.hpp"
#include "sits/encodings.hpp"
#include "sits/rng.hpp"
#include "sits/sampling.hpp"
#include "sits/store.hpp"

// Toy-scale ViT encoder plus the three pretext heads: gap classifier over
// stacked CLS tokens, frequency-map decoder, and time-translator + decoder
// for future-frame generation. Scalar type S is float for training and
// double for finite-difference gradient checks.

namespace sits {

enum class Task { td, fp, ff };

inline const char* task_name(Task t) {
    switch (t) {
        case Task::td: return "td";
        case Task::fp: return "fp";
        default: return "ff";
    }
}

inline Task parse_task(const std::string& s) {
    if (s == "td") return Task::td;
    if (s == "fp") return Task::fp;
    if (s == "ff") return Task::ff;
    throw ConfigError("unknown task '" + s + "' (want td, fp or ff)");
}

struct ViTConfig {
    int image_size = 64;
    int patch_size = 8;
    int channels = 4;
    int dim = 64;
    int depth = 4;
    int heads = 4;
    int mlp_ratio = 4;

    int patches_per_side() const { return image_size / patch_size; }
    int num_patches() const { return patches_per_side() * patches_per_side(); }
    int patch_elems() const { return channels * patch_size * patch_size; }

    void validate() const {
        if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
            throw ConfigError("image_size must be a positive multiple of patch_size");
        }
        if (dim <= 0 || heads <= 0 || dim % heads != 0) {
            throw ConfigError("dim must be divisible by heads");
        }
        if (depth < 1 || channels < 1 || mlp_ratio < 1) {
            throw ConfigError("depth, channels and mlp_ratio must be >= 1");
        }
    }
};

struct HeadConfig {
    int td_mlp_layers = 3;
    int fp_decoder_layers = 6;
    int ff_translator_layers = 2;
    int ff_decoder_layers = 4;
    int decoder_dim = 0;  // 0 means same as encoder dim
    int td_classes = 4;
    int fp_k = 3;

    int resolved_decoder_dim(const ViTConfig& vit) const {
        return decoder_dim > 0 ? decoder_dim : vit.dim;
    }
    void validate(const ViTConfig& vit) const {
        if (td_mlp_layers < 1 || fp_decoder_layers < 1 || ff_translator_layers < 1 ||
            ff_decoder_layers < 1) {
            throw ConfigError("head layer counts must be >= 1");
        }
        if (td_classes < 1 || fp_k < 1) throw ConfigError("td_classes and fp_k must be >= 1");
        if (resolved_decoder_dim(vit) % vit.heads != 0) {
            throw ConfigError("decoder_dim must be divisible by heads");
        }
    }
};

// --- patch <-> image layout -------------------------------------------------

// Patches are raster-ordered over the patch grid; within a patch, elements
// run (channel, py, px). One patch is one row of the patched matrix.
template <typename S, typename U>
void patchify(const U* img, int c, int h, int w, int ps, S* out) {
    int gy = h / ps, gx = w / ps;
    std::size_t elems = static_cast<std::size_t>(c) * ps * ps;
    for (int py = 0; py < gy; ++py) {
        for (int px = 0; px < gx; ++px) {
            S* row = out + (static_cast<std::size_t>(py) * gx + px) * elems;
            std::size_t o = 0;
            for (int ci = 0; ci < c; ++ci) {
                for (int y = 0; y < ps; ++y) {
                    const U* src = img + (static_cast<std::size_t>(ci) * h + py * ps + y) * w +
                                   px * ps;
                    for (int x = 0; x < ps; ++x) row[o++] = static_cast<S>(src[x]);
                }
            }
        }
    }
}

template <typename S>
void unpatchify(const S* patches, int c, int h, int w, int ps, S* img) {
    int gy = h / ps, gx = w / ps;
    std::size_t elems = static_cast<std::size_t>(c) * ps * ps;
    for (int py = 0; py < gy; ++py) {
        for (int px = 0; px < gx; ++px) {
            const S* row = patches + (static_cast<std::size_t>(py) * gx + px) * elems;
            std::size_t o = 0;
            for (int ci = 0; ci < c; ++ci) {
                for (int y = 0; y < ps; ++y) {
                    S* dst = img + (static_cast<std::size_t>(ci) * h + py * ps + y) * w + px * ps;
                    for (int x = 0; x < ps; ++x) dst[x] = row[o++];
                }
            }
        }
    }
}

// --- parameters --------------------------------------------------------------

template <typename S>
struct ParamStore {
    std::map<std::string, ad::Ptr<S>> tensors;  // name-ordered
    std::set<std::string> zero_init;            // prediction heads start at zero

    ad::Ptr<S> add(const std::string& name, int rows, int cols, bool zero = false) {
        auto node = ad::tensor<S>(rows, cols, true);
        if (!tensors.emplace(name, node).second) {
            throw Error("duplicate parameter name: " + name);
        }
        if (zero) zero_init.insert(name);
        return node;
    }
    const ad::Ptr<S>& at(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw Error("unknown parameter: " + name);
        return it->second;
    }
    void zero_grad() {
        for (auto& [name, p] : tensors) std::fill(p->grad.begin(), p->grad.end(), S(0));
    }
    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [name, p] : tensors) n += p->size();
        return n;
    }

    /// Truncated-normal weights, unit gains, zero biases; listed heads zeroed.
    void init(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& [name, p] : tensors) {
            bool is_gain = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
            bool is_bias = name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
            if (zero_init.count(name) || (is_bias && !zero_init.count(name))) {
                std::fill(p->val.begin(), p->val.end(), S(0));
            } else if (is_gain) {
                std::fill(p->val.begin(), p->val.end(), S(1));
            } else {
                for (auto& v : p->val) v = static_cast<S>(rng.truncated_normal(0.0, 0.02));
            }
        }
    }

    /// Every tensor randomized, including heads and norms. Gradient-check
    /// init: avoids structurally zero derivatives.
    void randomize_all(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& [name, p] : tensors) {
            for (auto& v : p->val) v = static_cast<S>(rng.truncated_normal(0.0, 0.05));
        }
    }
};

// --- checkpoints --------------------------------------------------------------

// Directory with params.json (names, shapes, dtype, plus the configs needed
// to rebuild the model) and params.bin (little-endian float32, concatenated
// in name order).
template <typename S>
void save_checkpoint(const ParamStore<S>& params, Task task, const ViTConfig& vit,
                     const HeadConfig& heads, const EncodingConfig& enc,
                     const std::filesystem::path& dir) {
    nlohmann::json meta;
    meta["dtype"] = "float32";
    meta["task"] = task_name(task);
    meta["vit"] = {{"image_size", vit.image_size}, {"patch_size", vit.patch_size},
                   {"channels", vit.channels},     {"dim", vit.dim},
                   {"depth", vit.depth},           {"heads", vit.heads},
                   {"mlp_ratio", vit.mlp_ratio}};
    meta["heads"] = {{"td_mlp_layers", heads.td_mlp_layers},
                     {"fp_decoder_layers", heads.fp_decoder_layers},
                     {"ff_translator_layers", heads.ff_translator_layers},
                     {"ff_decoder_layers", heads.ff_decoder_layers},
                     {"decoder_dim", heads.decoder_dim},
                     {"td_classes", heads.td_classes},
                     {"fp_k", heads.fp_k}};
    meta["encoding"] = {{"base", enc.base}, {"year_epoch", enc.year_epoch}};
    auto plist = nlohmann::json::array();
    std::vector<float> flat;
    flat.reserve(params.total_size());
    for (const auto& [name, p] : params.tensors) {
        plist.push_back({{"name", name}, {"shape", {p->rows, p->cols}}});
        for (S v : p->val) flat.push_back(static_cast<float>(v));
    }
    meta["params"] = plist;
    detail::write_store_dir(dir, [&](const std::filesystem::path& tmp) {
        std::string text = meta.dump(2);
        detail::write_file(tmp / "params.json", text.data(), text.size());
        detail::write_file(tmp / "params.bin", flat.data(), flat.size() * sizeof(float));
    });
}

struct CheckpointInfo {
    Task task;
    ViTConfig vit;
    HeadConfig heads;
    EncodingConfig enc;
};

inline nlohmann::json load_checkpoint_meta(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::path p = dir / "params.json";
    if (!fs::exists(p)) throw FormatError("no params.json in checkpoint: " + dir.string());
    nlohmann::json meta;
    try {
        std::ifstream in(p);
        in >> meta;
    } catch (const std::exception& e) {
        throw FormatError("unparseable params.json: " + std::string(e.what()));
    }
    return meta;
}

inline CheckpointInfo checkpoint_info(const std::filesystem::path& dir) {
    auto meta = load_checkpoint_meta(dir);
    CheckpointInfo info;
    info.task = parse_task(meta.value("task", "td"));
    const auto& v = meta.at("vit");
    info.vit.image_size = v.at("image_size");
    info.vit.patch_size = v.at("patch_size");
    info.vit.channels = v.at("channels");
    info.vit.dim = v.at("dim");
    info.vit.depth = v.at("depth");
    info.vit.heads = v.at("heads");
    info.vit.mlp_ratio = v.at("mlp_ratio");
    const auto& h = meta.at("heads");
    info.heads.td_mlp_layers = h.at("td_mlp_layers");
    info.heads.fp_decoder_layers = h.at("fp_decoder_layers");
    info.heads.ff_translator_layers = h.at("ff_translator_layers");
    info.heads.ff_decoder_layers = h.at("ff_decoder_layers");
    info.heads.decoder_dim = h.at("decoder_dim");
    info.heads.td_classes = h.at("td_classes");
    info.heads.fp_k = h.at("fp_k");
    const auto& e = meta.at("encoding");
    info.enc.base = e.at("base");
    info.enc.year_epoch = e.at("year_epoch");
    return info;
}

template <typename S>
void load_checkpoint(ParamStore<S>& params, const std::filesystem::path& dir) {
    auto meta = load_checkpoint_meta(dir);
    if (meta.value("dtype", "") != "float32") throw FormatError("checkpoint dtype must be float32");
    auto bytes = detail::read_file(dir / "params.bin");
    std::size_t expect = 0;
    for (const auto& entry : meta.at("params")) {
        expect += static_cast<std::size_t>(entry.at("shape")[0].get<int>()) *
                  entry.at("shape")[1].get<int>();
    }
    if (bytes.size() != expect * sizeof(float)) {
        throw IntegrityError("params.bin size does not match declared shapes");
    }
    const float* flat = reinterpret_cast<const float*>(bytes.data());
    std::size_t off = 0;
    std::size_t matched = 0;
    for (const auto& entry : meta.at("params")) {
        std::string name = entry.at("name");
        int rows = entry.at("shape")[0], cols = entry.at("shape")[1];
        std::size_t n = static_cast<std::size_t>(rows) * cols;
        auto it = params.tensors.find(name);
        if (it != params.tensors.end()) {
            if (it->second->rows != rows || it->second->cols != cols) {
                throw IntegrityError("checkpoint shape mismatch for " + name);
            }
            for (std::size_t i = 0; i < n; ++i) it->second->val[i] = static_cast<S>(flat[off + i]);
            ++matched;
        }
        off += n;
    }
    if (matched != params.tensors.size()) {
        throw IntegrityError("checkpoint is missing parameters required by the model");
    }
}

// --- the model ----------------------------------------------------------------

template <typename S>
class PretextModel {
public:
    PretextModel(Task task, ViTConfig vit, HeadConfig heads, EncodingConfig enc)
        : task_(task), vit_(vit), heads_(heads), enc_(enc) {
        vit_.validate();
        enc_.dim = vit_.dim;
        enc_.validate();
        heads_.validate(vit_);
        build_params();
        auto pe = patch_positions(vit_.num_patches(), enc_);
        pos_ = ad::constant_cast<S>(vit_.num_patches(), vit_.dim, pe.data());
    }

    Task task() const { return task_; }
    const ViTConfig& vit() const { return vit_; }
    const HeadConfig& head_config() const { return heads_; }
    const EncodingConfig& encoding() const { return enc_; }
    ParamStore<S>& params() { return params_; }
    const ParamStore<S>& params() const { return params_; }

    void init(std::uint64_t seed) { params_.init(seed); }
    void randomize_all(std::uint64_t seed) { params_.randomize_all(seed); }

    /// Standard ViT forward: patchify, embed, prepend CLS, add positions,
    /// pre-norm blocks, final norm. Tokens are (N+1) x dim, CLS at row 0.
    ad::Ptr<S> encode(const float* image) const {
        std::size_t n_px = static_cast<std::size_t>(vit_.channels) * vit_.image_size * vit_.image_size;
        for (std::size_t i = 0; i < n_px; ++i) {
            if (std::isnan(image[i])) {
                throw PreconditionError("encode: NaN in input image; impute before training");
            }
        }
        int n = vit_.num_patches();
        std::vector<S> patched(static_cast<std::size_t>(n) * vit_.patch_elems());
        patchify<S>(image, vit_.channels, vit_.image_size, vit_.image_size, vit_.patch_size,
                    patched.data());
        auto x = ad::constant<S>(n, vit_.patch_elems(), patched.data());
        auto tok = ad::linear(x, P("encoder.embed.w"), P("encoder.embed.b"));
        tok = ad::vstack(P("encoder.cls"), tok);
        tok = ad::add_block(tok, pos_, 1);
        for (int b = 0; b < vit_.depth; ++b) {
            tok = block(tok, block_prefix("encoder.blk", b), vit_.heads);
        }
        return ad::layer_norm(tok, P("encoder.lnf.g"), P("encoder.lnf.b"));
    }

    /// 3-layer MLP over the stacked CLS pair; unnormalized C-way logits.
    ad::Ptr<S> td_logits(const ad::Ptr<S>& z1, const ad::Ptr<S>& z2) const {
        require_task(Task::td);
        auto x = ad::concat_cols(ad::slice_rows(z1, 0, 1), ad::slice_rows(z2, 0, 1));
        for (int l = 0; l < heads_.td_mlp_layers; ++l) {
            x = ad::linear(x, P(layer_name("td.fc", l) + ".w"), P(layer_name("td.fc", l) + ".b"));
            if (l + 1 < heads_.td_mlp_layers) x = ad::gelu(x);
        }
        return x;
    }

    /// Symmetric gap-classification loss: mean cross-entropy over both
    /// presentation orders, so swapping the pair cannot change the value.
    ad::Ptr<S> td_loss(const BitemporalSample& sample) const {
        auto z1 = encode(sample.x1());
        auto z2 = encode(sample.x2());
        int label = td_label(sample.gap_months, heads_.td_classes).class_index;
        auto l12 = ad::cross_entropy(td_logits(z1, z2), label);
        auto l21 = ad::cross_entropy(td_logits(z2, z1), label);
        return ad::scale(ad::add(l12, l21), S(0.5));
    }

    /// Frequency decoder over the CLS-free concatenated token pair; output is
    /// patch-major, one row per first-frame patch, fp_k * patch^2 wide.
    ad::Ptr<S> fp_pred_patches(const ad::Ptr<S>& z1, const ad::Ptr<S>& z2, Timestamp t1,
                               Timestamp t2) const {
        require_task(Task::fp);
        int n = vit_.num_patches();
        auto z = ad::vstack(ad::slice_rows(z1, 1, n + 1), ad::slice_rows(z2, 1, n + 1));
        z = ad::add_block(z, pos_, 0);
        z = ad::add_block(z, pos_, n);
        z = ad::add_rowvec_range(z, projected_te(t1), 0, n);
        z = ad::add_rowvec_range(z, projected_te(t2), n, 2 * n);
        auto d = ad::linear(z, P("fp.in.w"), P("fp.in.b"));
        for (int b = 0; b < heads_.fp_decoder_layers; ++b) {
            d = block(d, block_prefix("fp.blk", b), vit_.heads);
        }
        d = ad::layer_norm(d, P("fp.lnf.g"), P("fp.lnf.b"));
        auto first = ad::slice_rows(d, 0, n);
        return ad::linear(first, P("fp.head.w"), P("fp.head.b"));
    }

    /// K x H x W frequency prediction (inference view of fp_pred_patches).
    std::vector<S> fp_forward(const ad::Ptr<S>& z1, const ad::Ptr<S>& z2, Timestamp t1,
                              Timestamp t2) const {
        auto pred = fp_pred_patches(z1, z2, t1, t2);
        std::vector<S> img(static_cast<std::size_t>(heads_.fp_k) * vit_.image_size * vit_.image_size);
        unpatchify(pred->val.data(), heads_.fp_k, vit_.image_size, vit_.image_size,
                   vit_.patch_size, img.data());
        return img;
    }

    ad::Ptr<S> fp_loss(const BitemporalSample& sample) const {
        if (sample.freq_map == nullptr) {
            throw PreconditionError("fp_loss: sample carries no frequency map");
        }
        auto z1 = encode(sample.x1());
        auto z2 = encode(sample.x2());
        auto pred = fp_pred_patches(z1, z2, sample.t1, sample.t2);
        auto target = patchify_target(sample.freq_map->data.data(), heads_.fp_k);
        return ad::normalized_mse(pred, target);
    }

    /// Translator + decoder: predict the later frame's patches from the
    /// earlier frame's tokens and both timestamps.
    ad::Ptr<S> ff_pred_patches(const ad::Ptr<S>& z1, Timestamp t1, Timestamp t2) const {
        require_task(Task::ff);
        int n = vit_.num_patches();
        auto z = ad::slice_rows(z1, 1, n + 1);
        z = ad::add_block(z, pos_, 0);
        auto te_sum = ad::add(projected_te(t1), projected_te(t2));
        z = ad::add_rowvec_range(z, te_sum, 0, n);
        for (int b = 0; b < heads_.ff_translator_layers; ++b) {
            z = block(z, block_prefix("ff.tt.blk", b), vit_.heads);
        }
        z = ad::layer_norm(z, P("ff.tt.lnf.g"), P("ff.tt.lnf.b"));
        auto d = ad::linear(z, P("ff.dec.in.w"), P("ff.dec.in.b"));
        for (int b = 0; b < heads_.ff_decoder_layers; ++b) {
            d = block(d, block_prefix("ff.dec.blk", b), vit_.heads);
        }
        d = ad::layer_norm(d, P("ff.dec.lnf.g"), P("ff.dec.lnf.b"));
        return ad::linear(d, P("ff.head.w"), P("ff.head.b"));
    }

    /// C x H x W predicted image (inference view of ff_pred_patches).
    std::vector<S> ff_forward(const ad::Ptr<S>& z1, Timestamp t1, Timestamp t2) const {
        auto pred = ff_pred_patches(z1, t1, t2);
        std::vector<S> img(static_cast<std::size_t>(vit_.channels) * vit_.image_size *
                           vit_.image_size);
        unpatchify(pred->val.data(), vit_.channels, vit_.image_size, vit_.image_size,
                   vit_.patch_size, img.data());
        return img;
    }

    ad::Ptr<S> ff_loss(const BitemporalSample& sample) const {
        auto z1 = encode(sample.x1());
        auto pred = ff_pred_patches(z1, sample.t1, sample.t2);
        auto target = patchify_target(sample.x2(), vit_.channels);
        return ad::normalized_mse(pred, target);
    }

    ad::Ptr<S> task_loss(const BitemporalSample& sample) const {
        switch (task_) {
            case Task::td: return td_loss(sample);
            case Task::fp: return fp_loss(sample);
            default: return ff_loss(sample);
        }
    }

    /// Patch-major standardization target for normalized_mse.
    std::vector<S> patchify_target(const float* raster, int channels) const {
        std::vector<S> target(static_cast<std::size_t>(vit_.num_patches()) * channels *
                              vit_.patch_size * vit_.patch_size);
        patchify<S>(raster, channels, vit_.image_size, vit_.image_size, vit_.patch_size,
                    target.data());
        for (S v : target) {
            if (std::isnan(v)) {
                throw PreconditionError("prediction target contains NaN; impute before training");
            }
        }
        return target;
    }

    void save(const std::filesystem::path& dir) const {
        save_checkpoint(params_, task_, vit_, heads_, enc_, dir);
    }
    void load(const std::filesystem::path& dir) { load_checkpoint(params_, dir); }

private:
    const ad::Ptr<S>& P(const std::string& name) const { return params_.at(name); }

    void require_task(Task t) const {
        if (task_ != t) {
            throw PreconditionError(std::string("model was built for task ") + task_name(task_));
        }
    }

    static std::string block_prefix(const std::string& stem, int index) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "%02d", index);
        return stem + buf;
    }
    static std::string layer_name(const std::string& stem, int index) {
        return stem + std::to_string(index);
    }

    /// Learned 2D -> D projection of the month/year encoding, shared by the
    /// dense heads.
    ad::Ptr<S> projected_te(Timestamp t) const {
        auto te = temporal_encoding(t, enc_);
        auto c = ad::constant_cast<S>(1, 2 * enc_.dim, te.data());
        return ad::linear(c, P("te_proj.w"), P("te_proj.b"));
    }

    ad::Ptr<S> block(ad::Ptr<S> x, const std::string& prefix, int heads) const {
        auto h = ad::layer_norm(x, P(prefix + ".ln1.g"), P(prefix + ".ln1.b"));
        auto q = ad::linear(h, P(prefix + ".attn.wq"), P(prefix + ".attn.bq"));
        auto k = ad::linear(h, P(prefix + ".attn.wk"), P(prefix + ".attn.bk"));
        auto v = ad::linear(h, P(prefix + ".attn.wv"), P(prefix + ".attn.bv"));
        auto a = ad::attention(q, k, v, heads);
        x = ad::add(x, ad::linear(a, P(prefix + ".attn.wo"), P(prefix + ".attn.bo")));
        auto m = ad::layer_norm(x, P(prefix + ".ln2.g"), P(prefix + ".ln2.b"));
        m = ad::linear(m, P(prefix + ".mlp.w1"), P(prefix + ".mlp.b1"));
        m = ad::gelu(m);
        m = ad::linear(m, P(prefix + ".mlp.w2"), P(prefix + ".mlp.b2"));
        return ad::add(x, m);
    }

    void add_block_params(const std::string& prefix, int width) {
        params_.add(prefix + ".ln1.g", 1, width);
        params_.add(prefix + ".ln1.b", 1, width);
        params_.add(prefix + ".attn.wq", width, width);
        params_.add(prefix + ".attn.bq", 1, width);
        params_.add(prefix + ".attn.wk", width, width);
        params_.add(prefix + ".attn.bk", 1, width);
        params_.add(prefix + ".attn.wv", width, width);
        params_.add(prefix + ".attn.bv", 1, width);
        params_.add(prefix + ".attn.wo", width, width);
        params_.add(prefix + ".attn.bo", 1, width);
        params_.add(prefix + ".ln2.g", 1, width);
        params_.add(prefix + ".ln2.b", 1, width);
        params_.add(prefix + ".mlp.w1", width, width * vit_.mlp_ratio);
        params_.add(prefix + ".mlp.b1", 1, width * vit_.mlp_ratio);
        params_.add(prefix + ".mlp.w2", width * vit_.mlp_ratio, width);
        params_.add(prefix + ".mlp.b2", 1, width);
    }

    void build_params() {
        int d = vit_.dim;
        params_.add("encoder.embed.w", vit_.patch_elems(), d);
        params_.add("encoder.embed.b", 1, d);
        params_.add("encoder.cls", 1, d);
        for (int b = 0; b < vit_.depth; ++b) add_block_params(block_prefix("encoder.blk", b), d);
        params_.add("encoder.lnf.g", 1, d);
        params_.add("encoder.lnf.b", 1, d);

        if (task_ == Task::fp || task_ == Task::ff) {
            params_.add("te_proj.w", 2 * d, d);
            params_.add("te_proj.b", 1, d);
        }

        int dec = heads_.resolved_decoder_dim(vit_);
        if (task_ == Task::td) {
            int in = 2 * d;
            for (int l = 0; l < heads_.td_mlp_layers; ++l) {
                bool last = l + 1 == heads_.td_mlp_layers;
                int out = last ? heads_.td_classes : d;
                params_.add(layer_name("td.fc", l) + ".w", in, out, last);
                params_.add(layer_name("td.fc", l) + ".b", 1, out);
                in = out;
            }
        } else if (task_ == Task::fp) {
            params_.add("fp.in.w", d, dec);
            params_.add("fp.in.b", 1, dec);
            for (int b = 0; b < heads_.fp_decoder_layers; ++b) {
                add_block_params(block_prefix("fp.blk", b), dec);
            }
            params_.add("fp.lnf.g", 1, dec);
            params_.add("fp.lnf.b", 1, dec);
            int out = heads_.fp_k * vit_.patch_size * vit_.patch_size;
            params_.add("fp.head.w", dec, out, true);
            params_.add("fp.head.b", 1, out);
        } else {
            for (int b = 0; b < heads_.ff_translator_layers; ++b) {
                add_block_params(block_prefix("ff.tt.blk", b), d);
            }
            params_.add("ff.tt.lnf.g", 1, d);
            params_.add("ff.tt.lnf.b", 1, d);
            params_.add("ff.dec.in.w", d, dec);
            params_.add("ff.dec.in.b", 1, dec);
            for (int b = 0; b < heads_.ff_decoder_layers; ++b) {
                add_block_params(block_prefix("ff.dec.blk", b), dec);
            }
            params_.add("ff.dec.lnf.g", 1, dec);
            params_.add("ff.dec.lnf.b", 1, dec);
            int out = vit_.channels * vit_.patch_size * vit_.patch_size;
            params_.add("ff.head.w", dec, out, true);
            params_.add("ff.head.b", 1, out);
        }
    }

    Task task_;
    ViTConfig vit_;
    HeadConfig heads_;
    EncodingConfig enc_;
    ParamStore<S> params_;
    ad::Ptr<S> pos_;  // fixed sinusoidal patch positions, shared across graphs
};

}  // namespace sits
