#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "mocap/geometry.hpp"
#include "mocap/motion_io.hpp"
#include "mocap/optimizer.hpp"
#include "mocap/tensor.hpp"

namespace mocap::dmae {

// Which additive context encodings a model uses; the ablation switch.
enum class EncodingMode { full, no_joint, no_time, none };
EncodingMode encoding_mode_from_string(const std::string& s);
std::string to_string(EncodingMode m);

// Frozen random Fourier bases for the signal (3D coordinates) and context
// (normalized joint/time index) encodings. The decoder, being narrower,
// encodes context with the leading rows of the same basis.
struct EncodingBasis {
    Eigen::MatrixXd Bs;  // m_enc x 3, entries ~ N(0, sigma_s^2)
    Eigen::VectorXd Bc;  // m_enc, entries ~ N(0, sigma_c^2)
    int m_dec = 0;
    double sigma_s = 1.0;
    double sigma_c = 10.0;
    uint64_t seed = 0;

    static EncodingBasis create(int enc_width, int dec_width, double sigma_s, double sigma_c,
                                uint64_t seed);

    // gamma(x) = [cos(2 pi B x); sin(2 pi B x)]
    Eigen::VectorXd encode_signal(const geom::Vec3& s) const;
    Eigen::VectorXd encode_context(double u) const;      // encoder width
    Eigen::VectorXd encode_context_dec(double u) const;  // decoder width
};

// T x J grid of anchor-centered positions with a missing/masked map.
struct MotionWindow {
    int T = 0;
    int J = 0;
    std::vector<geom::Vec3> pos;    // T*J, row-major (t*J + j)
    std::vector<uint8_t> mask;      // 1 = missing/masked
    geom::Vec3 anchor = geom::Vec3::Zero();
    int identity = -1;
    int start_frame = 0;

    int index(int t, int j) const { return t * J + j; }
    int visible_count() const;
};

// Anchor = mid-hip of the earliest frame where it is observed, else the
// centroid of all observed cells; subtracted from every position.
MotionWindow normalize_window(const std::vector<std::vector<geom::Vec3>>& raw,
                              const std::vector<std::vector<uint8_t>>& missing, int midhip);

// Rotation about the vertical axis through the window anchor.
void augment_rotate_z(MotionWindow& window, double theta);

struct MaskSpec {
    enum class Mode { uniform, structured } mode = Mode::uniform;
    double ratio = 0.5;        // uniform cell fraction
    double joint_ratio = 0.5;  // structured: whole joints
    double frame_ratio = 0.5;  // structured: whole frames
    uint64_t seed = 0;
};

// Throws ContractError when the requested mask covers every cell.
std::vector<uint8_t> sample_mask(const MaskSpec& spec, int T, int J);

struct ModelConfig {
    int window = 15;  // T
    int joints = 15;  // J
    int encoder_depth = 4;
    int encoder_width = 256;
    int encoder_heads = 8;
    int decoder_depth = 2;
    int decoder_width = 128;
    int decoder_heads = 4;
    double sigma_s = 1.0;
    double sigma_c = 10.0;
    double dropout = 0.1;
    EncodingMode encoding = EncodingMode::full;
    uint64_t seed = 0;
    std::string skeleton = "basic15";
    int midhip = 0;

    void validate() const;
};

struct Affine {
    num::Tensor gain, bias;
};
struct Linear {
    num::Tensor w, b;
};
struct Block {
    Affine ln1;
    Linear q, k, v, o;
    Affine ln2;
    Linear mlp1, mlp2;
};
struct Stack {
    std::vector<Block> blocks;
    Affine final_ln;
    int heads = 1;
    int width = 0;
};

struct DmaeModel {
    ModelConfig cfg;
    EncodingBasis basis;
    Stack encoder;
    Stack decoder;
    Linear enc_to_dec;
    num::Tensor mask_token;  // [1 x decoder_width], shared and learned
    Linear head;             // decoder_width -> 3

    // cached context encodings for the (window, joints) grid
    Eigen::MatrixXd enc_ctx_joint;  // J x enc_width
    Eigen::MatrixXd enc_ctx_time;   // T x enc_width
    Eigen::MatrixXd dec_ctx;        // T*J x dec_width

    static DmaeModel create(const ModelConfig& cfg);
    num::NamedParams parameters();  // stable order and names
    void rebuild_context_cache();
    // re-normalizes context indices over a wider joint axis (pose fusion)
    void extend_joints(int fused_joints, const std::string& fused_skeleton);
};

void save_model(const std::string& path, DmaeModel& model);
DmaeModel load_model(const std::string& path);

// Per-forward dropout bookkeeping; disabled outside training.
struct ForwardCtx {
    bool training = false;
    double dropout = 0.0;
    uint64_t seed = 0;
    uint64_t counter = 0;
    uint64_t next() { return mix_seed(seed, ++counter); }
};

// Token per unmasked cell: gamma_s(pos) + gamma_c(j/J) + gamma_c(t/T),
// rows in (t, j) row-major order. Rows may be fewer than T*J.
num::Tensor build_tokens(const MotionWindow& window, const DmaeModel& model);

// Pre-norm transformer stacks. encoder_forward requires >= 1 token.
num::Tensor encoder_forward(DmaeModel& model, const num::Tensor& tokens, ForwardCtx* ctx);

// Assembles the full grid (mask token at masked cells), re-adds context
// encodings, runs the decoder and projects every cell to 3 coordinates.
// `rows` limits the grid to the first `rows` frames (tail windows).
num::Tensor decoder_forward(DmaeModel& model, const num::Tensor& latents,
                            const std::vector<uint8_t>& mask, int rows_t, ForwardCtx* ctx);

// Mean over masked cells (x3 coordinates); unmasked cells contribute nothing.
num::Tensor masked_mse_loss(const num::Tensor& pred, const MotionWindow& target,
                            const std::vector<uint8_t>& loss_mask);

// Training internals shared with the fine-tune loop: a whole step's windows
// in one graph (attention blocked per window); returns the mean over windows
// of each window's supervised-cell MSE.
num::Tensor batched_step_loss(DmaeModel& model, const std::vector<MotionWindow>& windows,
                              const std::vector<const std::vector<uint8_t>*>& loss_masks,
                              ForwardCtx* ctx);

// Inference over one window: normalized predictions for every cell.
std::vector<geom::Vec3> predict_window(DmaeModel& model, const MotionWindow& window);

struct TrainConfig {
    int epochs = 1000;
    int batch = 32;
    double base_lr = 1e-5;
    double weight_decay = 0.01;
    MaskSpec mask;
    bool augment = true;
    uint64_t seed = 0;
};

struct LossCurve {
    std::vector<double> loss;  // per step, batch mean
    std::vector<double> lr;
};

// Raw complete windows in, trained model + loss curve out. Per step: sample
// mask, normalize against the mask, rotate, forward, masked MSE, AdamW with
// cosine decay.
LossCurve train(DmaeModel& model, const std::vector<MotionWindow>& dataset,
                const TrainConfig& tc);

// Window harvesting for training: complete cells only, raw coordinates
// (normalization happens per step once the mask is known).
std::vector<MotionWindow> build_training_windows(const std::vector<Track>& tracks, int T,
                                                 size_t max_windows, uint64_t seed);

struct CompletionResult {
    Track track;
    int unfilled_cells = 0;  // isolated cells no window could predict
};

// Sliding windows at stride T/3, overlap-averaged at missing cells; observed
// cells pass through untouched.
CompletionResult complete_sequence(DmaeModel& model, const Track& input);

// Per-joint, per-coordinate linear interpolation over time with boundary
// hold: the classical baseline the transformer has to beat.
Track linear_interpolate_sequence(const Track& input);

}  // namespace mocap::dmae
