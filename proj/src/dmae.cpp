#include "mocap/dmae.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "mocap/checkpoint.hpp"

namespace mocap::dmae {

using num::Tensor;

EncodingMode encoding_mode_from_string(const std::string& s) {
    if (s == "full") return EncodingMode::full;
    if (s == "no_joint") return EncodingMode::no_joint;
    if (s == "no_time") return EncodingMode::no_time;
    if (s == "none") return EncodingMode::none;
    throw ConfigError("model.encoding: unknown mode '" + s + "'");
}

std::string to_string(EncodingMode m) {
    switch (m) {
        case EncodingMode::full: return "full";
        case EncodingMode::no_joint: return "no_joint";
        case EncodingMode::no_time: return "no_time";
        default: return "none";
    }
}

// --- encoding -----------------------------------------------------------------

EncodingBasis EncodingBasis::create(int enc_width, int dec_width, double sigma_s, double sigma_c,
                                    uint64_t seed) {
    if (enc_width % 2 || dec_width % 2)
        throw ConfigError("encoding basis: widths must be even, got " +
                          std::to_string(enc_width) + "/" + std::to_string(dec_width));
    EncodingBasis basis;
    basis.sigma_s = sigma_s;
    basis.sigma_c = sigma_c;
    basis.seed = seed;
    basis.m_dec = dec_width / 2;
    const int m = enc_width / 2;
    auto rng = make_rng(seed, 0xBA515);
    std::normal_distribution<double> ns(0.0, sigma_s), nc(0.0, sigma_c);
    basis.Bs.resize(m, 3);
    for (int i = 0; i < m; i++)
        for (int k = 0; k < 3; k++) basis.Bs(i, k) = ns(rng);
    basis.Bc.resize(m);
    for (int i = 0; i < m; i++) basis.Bc(i) = nc(rng);
    if (basis.m_dec > m) throw ConfigError("encoding basis: decoder wider than encoder");
    return basis;
}

namespace {

Eigen::VectorXd fourier_features(const Eigen::VectorXd& phase) {
    const int m = static_cast<int>(phase.size());
    Eigen::VectorXd out(2 * m);
    for (int i = 0; i < m; i++) {
        out(i) = std::cos(2.0 * M_PI * phase(i));
        out(m + i) = std::sin(2.0 * M_PI * phase(i));
    }
    return out;
}

}  // namespace

Eigen::VectorXd EncodingBasis::encode_signal(const geom::Vec3& s) const {
    return fourier_features(Bs * s);
}

Eigen::VectorXd EncodingBasis::encode_context(double u) const {
    return fourier_features(Bc * u);
}

Eigen::VectorXd EncodingBasis::encode_context_dec(double u) const {
    return fourier_features(Bc.head(m_dec) * u);
}

// --- windows ------------------------------------------------------------------

int MotionWindow::visible_count() const {
    int n = 0;
    for (uint8_t m : mask) n += m == 0;
    return n;
}

MotionWindow normalize_window(const std::vector<std::vector<geom::Vec3>>& raw,
                              const std::vector<std::vector<uint8_t>>& missing, int midhip) {
    if (raw.empty() || raw[0].empty()) throw ContractError("normalize_window: empty window");
    MotionWindow w;
    w.T = static_cast<int>(raw.size());
    w.J = static_cast<int>(raw[0].size());

    bool anchored = false;
    geom::Vec3 anchor = geom::Vec3::Zero();
    for (int t = 0; t < w.T && !anchored; t++) {
        if (midhip < static_cast<int>(raw[t].size()) && !missing[t][midhip]) {
            anchor = raw[t][midhip];
            anchored = true;
        }
    }
    if (!anchored) {
        int n = 0;
        for (int t = 0; t < w.T; t++)
            for (int j = 0; j < w.J; j++)
                if (!missing[t][j]) {
                    anchor += raw[t][j];
                    n++;
                }
        if (n == 0) throw ContractError("normalize_window: no observed joints");
        anchor /= n;
    }

    w.anchor = anchor;
    w.pos.reserve(w.T * w.J);
    w.mask.reserve(w.T * w.J);
    for (int t = 0; t < w.T; t++)
        for (int j = 0; j < w.J; j++) {
            w.pos.push_back(raw[t][j] - anchor);
            w.mask.push_back(missing[t][j]);
        }
    return w;
}

void augment_rotate_z(MotionWindow& window, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    for (auto& p : window.pos) {
        const double x = p.x(), y = p.y();
        p.x() = c * x - s * y;
        p.y() = s * x + c * y;
    }
}

std::vector<uint8_t> sample_mask(const MaskSpec& spec, int T, int J) {
    if (spec.ratio < 0 || spec.ratio >= 1.0)
        throw ContractError("mask: ratio " + std::to_string(spec.ratio) + " outside [0,1)");
    const int cells = T * J;
    std::vector<uint8_t> mask(cells, 0);
    auto rng = make_rng(spec.seed, 0x3A5C);
    if (spec.mode == MaskSpec::Mode::uniform) {
        const int k = static_cast<int>(round_half_even(spec.ratio * cells));
        std::vector<int> idx(cells);
        for (int i = 0; i < cells; i++) idx[i] = i;
        for (int i = 0; i < k; i++) {
            std::uniform_int_distribution<int> pick(i, cells - 1);
            std::swap(idx[i], idx[pick(rng)]);
            mask[idx[i]] = 1;
        }
    } else {
        const int kj = static_cast<int>(round_half_even(spec.joint_ratio * J));
        const int kt = static_cast<int>(round_half_even(spec.frame_ratio * T));
        std::vector<int> joints(J), frames(T);
        for (int j = 0; j < J; j++) joints[j] = j;
        for (int t = 0; t < T; t++) frames[t] = t;
        for (int i = 0; i < kj; i++) {
            std::uniform_int_distribution<int> pick(i, J - 1);
            std::swap(joints[i], joints[pick(rng)]);
        }
        for (int i = 0; i < kt; i++) {
            std::uniform_int_distribution<int> pick(i, T - 1);
            std::swap(frames[i], frames[pick(rng)]);
        }
        for (int i = 0; i < kj; i++)
            for (int t = 0; t < T; t++) mask[t * J + joints[i]] = 1;
        for (int i = 0; i < kt; i++)
            for (int j = 0; j < J; j++) mask[frames[i] * J + j] = 1;
    }
    int visible = 0;
    for (uint8_t m : mask) visible += m == 0;
    if (visible == 0) throw ContractError("mask: configuration leaves no visible token");
    return mask;
}

// --- model --------------------------------------------------------------------

void ModelConfig::validate() const {
    if (window < 1) throw ConfigError("model.window: must be >= 1");
    if (joints < 1) throw ConfigError("model.joints: must be >= 1");
    if (encoder_depth < 1 || decoder_depth < 1)
        throw ConfigError("model: encoder/decoder depth must be >= 1");
    if (encoder_width % encoder_heads || decoder_width % decoder_heads)
        throw ConfigError("model: width must divide evenly into heads");
    if (decoder_width > encoder_width)
        throw ConfigError("model: decoder is wider than the encoder");
    if (dropout < 0 || dropout >= 1) throw ConfigError("model.dropout: outside [0,1)");
}

namespace {

struct ParamInit {
    std::mt19937_64 rng;
    explicit ParamInit(uint64_t seed) : rng(make_rng(seed, 0x1217)) {}

    Tensor weight(int rows, int cols) {
        std::normal_distribution<double> n(0.0, std::sqrt(2.0 / (rows + cols)));
        std::vector<double> v(static_cast<size_t>(rows) * cols);
        for (auto& x : v) x = n(rng);
        return Tensor::param({rows, cols}, std::move(v));
    }
    Tensor bias(int cols) { return Tensor::zeros({1, cols}, true); }
    Tensor ones(int cols) {
        return Tensor::param({1, cols}, std::vector<double>(cols, 1.0));
    }
    Tensor small(int cols) {
        std::normal_distribution<double> n(0.0, 0.02);
        std::vector<double> v(cols);
        for (auto& x : v) x = n(rng);
        return Tensor::param({1, cols}, std::move(v));
    }
};

Stack make_stack(ParamInit& init, int depth, int width, int heads) {
    Stack st;
    st.heads = heads;
    st.width = width;
    for (int d = 0; d < depth; d++) {
        Block b;
        b.ln1 = {init.ones(width), init.bias(width)};
        b.q = {init.weight(width, width), init.bias(width)};
        b.k = {init.weight(width, width), init.bias(width)};
        b.v = {init.weight(width, width), init.bias(width)};
        b.o = {init.weight(width, width), init.bias(width)};
        b.ln2 = {init.ones(width), init.bias(width)};
        b.mlp1 = {init.weight(width, 4 * width), init.bias(4 * width)};
        b.mlp2 = {init.weight(4 * width, width), init.bias(width)};
        st.blocks.push_back(std::move(b));
    }
    st.final_ln = {init.ones(width), init.bias(width)};
    return st;
}

void stack_params(num::NamedParams& out, const std::string& prefix, Stack& st) {
    for (size_t d = 0; d < st.blocks.size(); d++) {
        auto& b = st.blocks[d];
        const std::string p = prefix + ".b" + std::to_string(d) + ".";
        out.emplace_back(p + "ln1.gain", b.ln1.gain);
        out.emplace_back(p + "ln1.bias", b.ln1.bias);
        out.emplace_back(p + "q.w", b.q.w);
        out.emplace_back(p + "q.b", b.q.b);
        out.emplace_back(p + "k.w", b.k.w);
        out.emplace_back(p + "k.b", b.k.b);
        out.emplace_back(p + "v.w", b.v.w);
        out.emplace_back(p + "v.b", b.v.b);
        out.emplace_back(p + "o.w", b.o.w);
        out.emplace_back(p + "o.b", b.o.b);
        out.emplace_back(p + "ln2.gain", b.ln2.gain);
        out.emplace_back(p + "ln2.bias", b.ln2.bias);
        out.emplace_back(p + "mlp1.w", b.mlp1.w);
        out.emplace_back(p + "mlp1.b", b.mlp1.b);
        out.emplace_back(p + "mlp2.w", b.mlp2.w);
        out.emplace_back(p + "mlp2.b", b.mlp2.b);
    }
    out.emplace_back(prefix + ".final_ln.gain", st.final_ln.gain);
    out.emplace_back(prefix + ".final_ln.bias", st.final_ln.bias);
}

}  // namespace

DmaeModel DmaeModel::create(const ModelConfig& cfg) {
    cfg.validate();
    DmaeModel model;
    model.cfg = cfg;
    model.basis =
        EncodingBasis::create(cfg.encoder_width, cfg.decoder_width, cfg.sigma_s, cfg.sigma_c,
                              cfg.seed);
    ParamInit init(cfg.seed);
    model.encoder = make_stack(init, cfg.encoder_depth, cfg.encoder_width, cfg.encoder_heads);
    model.decoder = make_stack(init, cfg.decoder_depth, cfg.decoder_width, cfg.decoder_heads);
    model.enc_to_dec = {init.weight(cfg.encoder_width, cfg.decoder_width),
                        init.bias(cfg.decoder_width)};
    model.mask_token = init.small(cfg.decoder_width);
    model.head = {init.weight(cfg.decoder_width, 3), init.bias(3)};
    model.rebuild_context_cache();
    return model;
}

num::NamedParams DmaeModel::parameters() {
    num::NamedParams out;
    stack_params(out, "encoder", encoder);
    stack_params(out, "decoder", decoder);
    out.emplace_back("enc_to_dec.w", enc_to_dec.w);
    out.emplace_back("enc_to_dec.b", enc_to_dec.b);
    out.emplace_back("mask_token", mask_token);
    out.emplace_back("head.w", head.w);
    out.emplace_back("head.b", head.b);
    return out;
}

void DmaeModel::rebuild_context_cache() {
    const int T = cfg.window, J = cfg.joints;
    const int we = cfg.encoder_width, wd = cfg.decoder_width;
    const bool with_joint =
        cfg.encoding == EncodingMode::full || cfg.encoding == EncodingMode::no_time;
    const bool with_time =
        cfg.encoding == EncodingMode::full || cfg.encoding == EncodingMode::no_joint;

    enc_ctx_joint = Eigen::MatrixXd::Zero(J, we);
    enc_ctx_time = Eigen::MatrixXd::Zero(T, we);
    dec_ctx = Eigen::MatrixXd::Zero(T * J, wd);
    for (int j = 0; j < J && with_joint; j++)
        enc_ctx_joint.row(j) = basis.encode_context(static_cast<double>(j) / J);
    for (int t = 0; t < T && with_time; t++)
        enc_ctx_time.row(t) = basis.encode_context(static_cast<double>(t) / T);
    for (int t = 0; t < T; t++)
        for (int j = 0; j < J; j++) {
            Eigen::VectorXd row = Eigen::VectorXd::Zero(wd);
            if (with_joint) row += basis.encode_context_dec(static_cast<double>(j) / J);
            if (with_time) row += basis.encode_context_dec(static_cast<double>(t) / T);
            dec_ctx.row(t * J + j) = row;
        }
}

void DmaeModel::extend_joints(int fused_joints, const std::string& fused_skeleton) {
    if (fused_joints < cfg.joints)
        throw ContractError("extend_joints: cannot shrink the joint axis");
    cfg.joints = fused_joints;
    cfg.skeleton = fused_skeleton;
    rebuild_context_cache();
}

void save_model(const std::string& path, DmaeModel& model) {
    nlohmann::json h;
    h["window"] = model.cfg.window;
    h["joints"] = model.cfg.joints;
    h["encoder_depth"] = model.cfg.encoder_depth;
    h["encoder_width"] = model.cfg.encoder_width;
    h["encoder_heads"] = model.cfg.encoder_heads;
    h["decoder_depth"] = model.cfg.decoder_depth;
    h["decoder_width"] = model.cfg.decoder_width;
    h["decoder_heads"] = model.cfg.decoder_heads;
    h["sigma_s"] = model.cfg.sigma_s;
    h["sigma_c"] = model.cfg.sigma_c;
    h["dropout"] = model.cfg.dropout;
    h["encoding"] = to_string(model.cfg.encoding);
    h["seed"] = model.cfg.seed;
    h["skeleton"] = model.cfg.skeleton;
    h["midhip"] = model.cfg.midhip;

    num::NamedParams records = model.parameters();
    // frozen bases ship with the checkpoint so loading never re-samples
    {
        std::vector<double> bs(model.basis.Bs.size());
        Eigen::Map<Eigen::MatrixXd>(bs.data(), model.basis.Bs.rows(), model.basis.Bs.cols()) =
            model.basis.Bs;
        records.emplace_back("basis.Bs",
                             Tensor::constant({static_cast<int>(model.basis.Bs.rows()), 3},
                                              std::move(bs)));
        std::vector<double> bc(model.basis.Bc.size());
        Eigen::Map<Eigen::VectorXd>(bc.data(), model.basis.Bc.size()) = model.basis.Bc;
        records.emplace_back("basis.Bc",
                             Tensor::constant({static_cast<int>(model.basis.Bc.size())},
                                              std::move(bc)));
    }
    num::save_checkpoint(path, h.dump(), records);
}

DmaeModel load_model(const std::string& path) {
    num::Checkpoint ck = num::load_checkpoint(path);
    ModelConfig cfg;
    try {
        auto h = nlohmann::json::parse(ck.header);
        cfg.window = h.at("window").get<int>();
        cfg.joints = h.at("joints").get<int>();
        cfg.encoder_depth = h.at("encoder_depth").get<int>();
        cfg.encoder_width = h.at("encoder_width").get<int>();
        cfg.encoder_heads = h.at("encoder_heads").get<int>();
        cfg.decoder_depth = h.at("decoder_depth").get<int>();
        cfg.decoder_width = h.at("decoder_width").get<int>();
        cfg.decoder_heads = h.at("decoder_heads").get<int>();
        cfg.sigma_s = h.at("sigma_s").get<double>();
        cfg.sigma_c = h.at("sigma_c").get<double>();
        cfg.dropout = h.at("dropout").get<double>();
        cfg.encoding = encoding_mode_from_string(h.at("encoding").get<std::string>());
        cfg.seed = h.at("seed").get<uint64_t>();
        cfg.skeleton = h.at("skeleton").get<std::string>();
        cfg.midhip = h.at("midhip").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model: bad checkpoint header in " + path + ": " + e.what());
    }
    DmaeModel model = DmaeModel::create(cfg);

    std::map<std::string, Tensor> by_name;
    for (auto& [name, t] : ck.params) by_name.emplace(name, t);
    auto take = [&](const std::string& name) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw DataError("model: checkpoint " + path + " is missing record '" + name + "'");
        return it->second;
    };
    for (auto& [name, t] : model.parameters()) {
        Tensor src = take(name);
        if (src.shape() != t.shape())
            throw DataError("model: checkpoint record '" + name + "' has the wrong shape");
        std::copy(src.values().begin(), src.values().end(), t.data().begin());
    }
    {
        Tensor bs = take("basis.Bs");
        if (bs.size() != model.basis.Bs.size())
            throw DataError("model: checkpoint basis.Bs has the wrong size");
        model.basis.Bs = Eigen::Map<const Eigen::MatrixXd>(bs.values().data(),
                                                           model.basis.Bs.rows(), 3);
        Tensor bc = take("basis.Bc");
        if (bc.size() != model.basis.Bc.size())
            throw DataError("model: checkpoint basis.Bc has the wrong size");
        model.basis.Bc = Eigen::Map<const Eigen::VectorXd>(bc.values().data(), bc.size());
    }
    model.rebuild_context_cache();
    return model;
}

// --- forward ------------------------------------------------------------------

namespace {

Tensor affine_ln(const Tensor& x, const Affine& a) {
    return num::layer_norm_affine(x, a.gain, a.bias);
}

Tensor linear(const Tensor& x, const Linear& l) { return num::linear(x, l.w, l.b); }

const std::vector<int> kNoGroups;

Tensor attention(const Tensor& x, Block& blk, int heads, ForwardCtx* ctx,
                 const std::vector<int>& groups) {
    const Tensor q = linear(x, blk.q);
    const Tensor k = linear(x, blk.k);
    const Tensor v = linear(x, blk.v);
    const bool drop = ctx && ctx->training && ctx->dropout > 0;
    Tensor o = num::multihead_attention(q, k, v, heads, drop ? ctx->dropout : 0.0,
                                        drop ? ctx->next() : 0, groups);
    o = linear(o, blk.o);
    if (drop) o = num::dropout(o, ctx->dropout, ctx->next());
    return o;
}

Tensor run_stack(Stack& st, Tensor x, ForwardCtx* ctx,
                 const std::vector<int>& groups = kNoGroups) {
    for (auto& blk : st.blocks) {
        x = num::add(x, attention(affine_ln(x, blk.ln1), blk, st.heads, ctx, groups));
        Tensor h = linear(num::gelu(linear(affine_ln(x, blk.ln2), blk.mlp1)), blk.mlp2);
        if (ctx && ctx->training && ctx->dropout > 0)
            h = num::dropout(h, ctx->dropout, ctx->next());
        x = num::add(x, h);
    }
    return affine_ln(x, st.final_ln);
}

}  // namespace

Tensor build_tokens(const MotionWindow& window, const DmaeModel& model) {
    const int we = model.cfg.encoder_width;
    const int n = window.visible_count();
    std::vector<double> values;
    values.reserve(static_cast<size_t>(n) * we);
    for (int t = 0; t < window.T; t++) {
        for (int j = 0; j < window.J; j++) {
            if (window.mask[window.index(t, j)]) continue;
            Eigen::VectorXd tok = model.basis.encode_signal(window.pos[window.index(t, j)]);
            tok += model.enc_ctx_joint.row(j).transpose();
            tok += model.enc_ctx_time.row(t).transpose();
            values.insert(values.end(), tok.data(), tok.data() + we);
        }
    }
    return Tensor::constant({n, we}, std::move(values));
}

Tensor encoder_forward(DmaeModel& model, const Tensor& tokens, ForwardCtx* ctx) {
    if (!tokens.defined() || tokens.size() == 0 || tokens.shape()[0] == 0)
        throw ContractError("encoder: no visible tokens");
    if (tokens.shape()[1] != model.cfg.encoder_width)
        throw DimensionError("encoder: token width " + std::to_string(tokens.shape()[1]) +
                             " != model width " + std::to_string(model.cfg.encoder_width));
    return run_stack(model.encoder, tokens, ctx);
}

Tensor decoder_forward(DmaeModel& model, const Tensor& latents,
                       const std::vector<uint8_t>& mask, int rows_t, ForwardCtx* ctx) {
    const int J = model.cfg.joints;
    const int cells = rows_t * J;
    if (static_cast<int>(mask.size()) != cells)
        throw DimensionError("decoder: mask has " + std::to_string(mask.size()) +
                             " cells, expected " + std::to_string(cells));
    const Tensor z = linear(latents, model.enc_to_dec);
    const int n_vis = z.shape()[0];
    const Tensor table = num::concat({z, model.mask_token}, 0);
    std::vector<int> row_ids(cells);
    int next_vis = 0;
    for (int idx = 0; idx < cells; idx++) row_ids[idx] = mask[idx] ? n_vis : next_vis++;
    if (next_vis != n_vis)
        throw DimensionError("decoder: " + std::to_string(n_vis) + " latents for " +
                             std::to_string(next_vis) + " visible cells");
    Tensor grid = num::gather_rows(table, row_ids);
    if (model.cfg.encoding != EncodingMode::none) {
        std::vector<double> ctx_rows(static_cast<size_t>(cells) * model.cfg.decoder_width);
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            ctx_rows.data(), cells, model.cfg.decoder_width) = model.dec_ctx.topRows(cells);
        grid = num::add(grid,
                        Tensor::constant({cells, model.cfg.decoder_width}, std::move(ctx_rows)));
    }
    Tensor x = run_stack(model.decoder, grid, ctx);
    return linear(x, model.head);
}

Tensor masked_mse_loss(const Tensor& pred, const MotionWindow& target,
                       const std::vector<uint8_t>& loss_mask) {
    const int cells = static_cast<int>(loss_mask.size());
    if (pred.shape()[0] != cells || pred.shape()[1] != 3)
        throw DimensionError("masked_mse: prediction shape mismatch");
    int n_masked = 0;
    for (uint8_t m : loss_mask) n_masked += m != 0;
    if (n_masked == 0) throw ContractError("masked_mse: no masked cells to supervise");
    std::vector<double> tgt(static_cast<size_t>(cells) * 3);
    std::vector<double> wgt(static_cast<size_t>(cells) * 3, 0.0);
    for (int i = 0; i < cells; i++) {
        for (int c = 0; c < 3; c++) {
            tgt[3 * i + c] = target.pos[i][c];
            if (loss_mask[i]) wgt[3 * i + c] = 1.0;
        }
    }
    const Tensor diff =
        num::add(pred, num::scale(Tensor::constant({cells, 3}, std::move(tgt)), -1.0));
    const Tensor sq = num::mul(diff, diff);
    const Tensor picked = num::mul(sq, Tensor::constant({cells, 3}, std::move(wgt)));
    return num::scale(num::sum(picked), 1.0 / (3.0 * n_masked));
}

std::vector<geom::Vec3> predict_window(DmaeModel& model, const MotionWindow& window) {
    const Tensor tokens = build_tokens(window, model);
    const Tensor latents = encoder_forward(model, tokens, nullptr);
    const Tensor pred = decoder_forward(model, latents, window.mask, window.T, nullptr);
    std::vector<geom::Vec3> out(window.T * window.J);
    for (int i = 0; i < window.T * window.J; i++)
        out[i] = geom::Vec3(pred.values()[3 * i], pred.values()[3 * i + 1],
                            pred.values()[3 * i + 2]);
    return out;
}

// --- training -------------------------------------------------------------------

namespace {
// anchor policy of normalize_window, applied against an arbitrary mask
geom::Vec3 anchored_against_mask(const MotionWindow& raw, const std::vector<uint8_t>& mask,
                                 int midhip) {
    for (int t = 0; t < raw.T; t++)
        if (!mask[raw.index(t, midhip)]) return raw.pos[raw.index(t, midhip)];
    geom::Vec3 c = geom::Vec3::Zero();
    int n = 0;
    for (int i = 0; i < raw.T * raw.J; i++) {
        if (mask[i]) continue;
        c += raw.pos[i];
        n++;
    }
    if (n == 0) throw ContractError("train: window has no visible cells");
    return c / n;
}
}  // namespace

// One training step's windows fused into a single graph: shared linear and
// norm kernels over all rows, attention blocked per window.
Tensor batched_step_loss(DmaeModel& model, const std::vector<MotionWindow>& windows,
                         const std::vector<const std::vector<uint8_t>*>& loss_masks,
                         ForwardCtx* ctx) {
    const int we = model.cfg.encoder_width;
    const int wd = model.cfg.decoder_width;
    const int J = model.cfg.joints;
    const size_t count = windows.size();

    std::vector<int> token_groups(count), cell_groups(count);
    size_t total_vis = 0, total_cells = 0;
    for (size_t w = 0; w < count; w++) {
        token_groups[w] = windows[w].visible_count();
        cell_groups[w] = windows[w].T * J;
        total_vis += token_groups[w];
        total_cells += cell_groups[w];
    }

    std::vector<double> token_vals;
    token_vals.reserve(total_vis * we);
    for (const auto& win : windows) {
        for (int t = 0; t < win.T; t++)
            for (int j = 0; j < J; j++) {
                if (win.mask[win.index(t, j)]) continue;
                Eigen::VectorXd tok = model.basis.encode_signal(win.pos[win.index(t, j)]);
                tok += model.enc_ctx_joint.row(j).transpose();
                tok += model.enc_ctx_time.row(t).transpose();
                token_vals.insert(token_vals.end(), tok.data(), tok.data() + we);
            }
    }
    const Tensor tokens =
        Tensor::constant({static_cast<int>(total_vis), we}, std::move(token_vals));
    const Tensor latents = run_stack(model.encoder, tokens, ctx, token_groups);

    const Tensor z = linear(latents, model.enc_to_dec);
    const Tensor table = num::concat({z, model.mask_token}, 0);
    std::vector<int> row_ids(total_cells);
    {
        size_t cell = 0;
        int vis = 0;
        for (const auto& win : windows) {
            for (int idx = 0; idx < win.T * J; idx++)
                row_ids[cell++] = win.mask[idx] ? static_cast<int>(total_vis) : vis++;
        }
    }
    Tensor grid = num::gather_rows(table, row_ids);
    if (model.cfg.encoding != EncodingMode::none) {
        std::vector<double> ctx_rows(total_cells * wd);
        size_t off = 0;
        for (const auto& win : windows) {
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                ctx_rows.data() + off, win.T * J, wd) = model.dec_ctx.topRows(win.T * J);
            off += static_cast<size_t>(win.T) * J * wd;
        }
        grid = num::add(grid,
                        Tensor::constant({static_cast<int>(total_cells), wd},
                                         std::move(ctx_rows)));
    }
    const Tensor decoded = run_stack(model.decoder, grid, ctx, cell_groups);
    const Tensor pred = linear(decoded, model.head);

    // mean over each window's supervised cells, then mean over windows
    std::vector<double> tgt(total_cells * 3), wgt(total_cells * 3, 0.0);
    size_t cell = 0;
    for (size_t w = 0; w < count; w++) {
        const auto& win = windows[w];
        const auto& lm = *loss_masks[w];
        int n_loss = 0;
        for (uint8_t m : lm) n_loss += m != 0;
        if (n_loss == 0) throw ContractError("train: a window has no supervised cells");
        const double weight = 1.0 / (3.0 * n_loss * count);
        for (int idx = 0; idx < win.T * J; idx++, cell++) {
            for (int c = 0; c < 3; c++) {
                tgt[3 * cell + c] = win.pos[idx][c];
                if (lm[idx]) wgt[3 * cell + c] = weight;
            }
        }
    }
    const Tensor diff = num::add(
        pred, num::scale(Tensor::constant({static_cast<int>(total_cells), 3}, std::move(tgt)),
                         -1.0));
    const Tensor sq = num::mul(diff, diff);
    return num::sum(
        num::mul(sq, Tensor::constant({static_cast<int>(total_cells), 3}, std::move(wgt))));
}

std::vector<MotionWindow> build_training_windows(const std::vector<Track>& tracks, int T,
                                                 size_t max_windows, uint64_t seed) {
    std::vector<std::pair<int, int>> candidates;  // (track, start)
    for (size_t k = 0; k < tracks.size(); k++) {
        const auto& tr = tracks[k];
        for (int start = 0; start + T <= tr.length(); start++) {
            bool complete = true;
            for (int t = start; t < start + T && complete; t++)
                for (uint8_t m : tr.missing[t]) complete = complete && m == 0;
            if (complete) candidates.emplace_back(static_cast<int>(k), start);
        }
    }
    auto rng = make_rng(seed, 0xDA7A);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    if (candidates.size() > max_windows) candidates.resize(max_windows);

    std::vector<MotionWindow> out;
    out.reserve(candidates.size());
    for (const auto& [k, start] : candidates) {
        const auto& tr = tracks[k];
        MotionWindow w;
        w.T = T;
        w.J = static_cast<int>(tr.pos[0].size());
        w.identity = tr.identity;
        w.start_frame = tr.start_frame + start;
        w.pos.reserve(T * w.J);
        for (int t = start; t < start + T; t++)
            for (int j = 0; j < w.J; j++) w.pos.push_back(tr.pos[t][j]);
        w.mask.assign(T * w.J, 0);
        out.push_back(std::move(w));
    }
    return out;
}

LossCurve train(DmaeModel& model, const std::vector<MotionWindow>& dataset,
                const TrainConfig& tc) {
    if (dataset.empty()) throw ContractError("train: empty dataset");
    for (const auto& w : dataset)
        if (w.visible_count() != w.T * w.J)
            throw ContractError("train: dataset windows must be complete");
    if (tc.mask.ratio <= 0 && tc.mask.mode == MaskSpec::Mode::uniform)
        throw ContractError("train: mask ratio must be positive");

    num::NamedParams params = model.parameters();
    const int n = static_cast<int>(dataset.size());
    const int steps_per_epoch = (n + tc.batch - 1) / tc.batch;
    const long long total_steps = static_cast<long long>(tc.epochs) * steps_per_epoch;

    num::OptimizerState opt;
    opt.init(params, tc.base_lr, total_steps, tc.weight_decay);

    LossCurve curve;
    curve.loss.reserve(total_steps);
    curve.lr.reserve(total_steps);

    long long step = 0;
    std::vector<int> order(n);
    for (int i = 0; i < n; i++) order[i] = i;
    for (int epoch = 0; epoch < tc.epochs; epoch++) {
        auto epoch_rng = make_rng(tc.seed, 0xE70C + epoch);
        std::shuffle(order.begin(), order.end(), epoch_rng);
        for (int base = 0; base < n; base += tc.batch) {
            const int count = std::min(tc.batch, n - base);
            for (auto& [name, p] : params) p.zero_grad();
            std::vector<MotionWindow> prepared;
            prepared.reserve(count);
            for (int k = 0; k < count; k++) {
                const MotionWindow& raw = dataset[order[base + k]];
                const uint64_t step_seed =
                    mix_seed(tc.seed, static_cast<uint64_t>(step) * 4096 + k);
                MaskSpec ms = tc.mask;
                ms.seed = step_seed;
                MotionWindow w = raw;
                w.mask = sample_mask(ms, w.T, w.J);
                const geom::Vec3 anchor = anchored_against_mask(raw, w.mask, model.cfg.midhip);
                for (auto& p : w.pos) p -= anchor;
                w.anchor = anchor;
                if (tc.augment) {
                    auto aug_rng = make_rng(step_seed, 0xA06);
                    std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
                    augment_rotate_z(w, u(aug_rng));
                }
                prepared.push_back(std::move(w));
            }
            std::vector<const std::vector<uint8_t>*> loss_masks;
            for (const auto& w : prepared) loss_masks.push_back(&w.mask);
            ForwardCtx ctx{true, model.cfg.dropout,
                           mix_seed(tc.seed, 0xD0000000ull + static_cast<uint64_t>(step)), 0};
            const Tensor loss = batched_step_loss(model, prepared, loss_masks, &ctx);
            num::backward(loss);
            double batch_loss = loss.item();
            if (!std::isfinite(batch_loss)) {
                double max_grad = 0;
                for (auto& [name, p] : params)
                    for (double g : p.grad()) max_grad = std::max(max_grad, std::abs(g));
                throw TrainingError("train: non-finite loss at step " + std::to_string(step) +
                                    " (lr " +
                                    std::to_string(num::cosine_lr(tc.base_lr, step, total_steps)) +
                                    ", max |grad| " + std::to_string(max_grad) + ")");
            }
            const double lr = opt.apply(params);
            curve.loss.push_back(batch_loss);
            curve.lr.push_back(lr);
            step++;
        }
    }
    return curve;
}

// --- completion -----------------------------------------------------------------

CompletionResult complete_sequence(DmaeModel& model, const Track& input) {
    const int T = model.cfg.window;
    const int J = model.cfg.joints;
    CompletionResult result;
    result.track = input;
    const int len = input.length();
    if (len == 0) return result;
    if (!input.pos.empty() && static_cast<int>(input.pos[0].size()) != J)
        throw DataError("complete: sequence has " + std::to_string(input.pos[0].size()) +
                        " joints, model expects " + std::to_string(J));

    std::vector<int> starts;
    if (len <= T) {
        starts.push_back(0);
    } else {
        const int stride = std::max(1, T / 3);
        for (int s = 0; s + T <= len; s += stride) starts.push_back(s);
        if (starts.back() != len - T) starts.push_back(len - T);
    }

    std::vector<geom::Vec3> sums(static_cast<size_t>(len) * J, geom::Vec3::Zero());
    std::vector<int> counts(static_cast<size_t>(len) * J, 0);

    for (int start : starts) {
        const int wlen = std::min(T, len - start);
        std::vector<std::vector<geom::Vec3>> raw(input.pos.begin() + start,
                                                 input.pos.begin() + start + wlen);
        std::vector<std::vector<uint8_t>> missing(input.missing.begin() + start,
                                                  input.missing.begin() + start + wlen);
        int observed = 0;
        for (const auto& row : missing)
            for (uint8_t m : row) observed += m == 0;
        if (observed == 0) continue;  // nothing to condition on; overlaps may cover it

        MotionWindow w = normalize_window(raw, missing, model.cfg.midhip);
        const auto pred = predict_window(model, w);
        for (int t = 0; t < wlen; t++)
            for (int j = 0; j < J; j++) {
                if (!input.missing[start + t][j]) continue;
                sums[(start + t) * static_cast<size_t>(J) + j] += pred[w.index(t, j)] + w.anchor;
                counts[(start + t) * static_cast<size_t>(J) + j]++;
            }
    }

    for (int t = 0; t < len; t++)
        for (int j = 0; j < J; j++) {
            if (!input.missing[t][j]) continue;  // observed cells pass through untouched
            const size_t idx = t * static_cast<size_t>(J) + j;
            if (counts[idx] > 0) {
                result.track.pos[t][j] = sums[idx] / counts[idx];
                result.track.missing[t][j] = 0;
            } else {
                result.unfilled_cells++;
            }
        }
    return result;
}

Track linear_interpolate_sequence(const Track& input) {
    Track out = input;
    const int len = input.length();
    if (len == 0) return out;
    const int J = static_cast<int>(input.pos[0].size());
    for (int j = 0; j < J; j++) {
        std::vector<int> obs;
        for (int t = 0; t < len; t++)
            if (!input.missing[t][j]) obs.push_back(t);
        if (obs.empty()) continue;  // nothing to interpolate from
        for (int t = 0; t < len; t++) {
            if (!input.missing[t][j]) continue;
            auto hi = std::lower_bound(obs.begin(), obs.end(), t);
            geom::Vec3 value;
            if (hi == obs.begin()) {
                value = input.pos[obs.front()][j];  // boundary hold
            } else if (hi == obs.end()) {
                value = input.pos[obs.back()][j];
            } else {
                const int t1 = *hi, t0 = *(hi - 1);
                const double a = static_cast<double>(t - t0) / (t1 - t0);
                value = (1.0 - a) * input.pos[t0][j] + a * input.pos[t1][j];
            }
            out.pos[t][j] = value;
            out.missing[t][j] = 0;
        }
    }
    return out;
}

}  // namespace mocap::dmae
