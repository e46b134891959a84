#include "groupcam/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "groupcam/rng.hpp"

namespace groupcam {

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

FixtureSample generate_fixture_sample(const FixtureDatasetSpec& spec, int index) {
    const int H = spec.height, W = spec.width;
    Rng rng(Rng::mix(spec.seed, static_cast<std::uint64_t>(index)));

    FixtureSample s;
    s.label = index % 2;
    s.image = ImageTensor(3, H, W);

    // Background noise, fixed draw order: channel, row, column.
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                s.image.at(c, y, x) = rng.uniform(0.0, 0.3);

    // Per-class channel tint; every shape pixel stays in [0.7, 1.0].
    // square: warm (R high), circle: cool (B high).
    const double lo[2][3] = {{0.85, 0.75, 0.70}, {0.70, 0.75, 0.85}};
    const double hi[2][3] = {{1.00, 0.90, 0.85}, {0.85, 0.90, 1.00}};

    if (s.label == 0) {
        const int side = rng.uniform_int(16, 30);
        const int x0 = rng.uniform_int(0, W - side);
        const int y0 = rng.uniform_int(0, H - side);
        s.bbox = {x0, y0, side, side};
        for (int y = y0; y < y0 + side; ++y)
            for (int x = x0; x < x0 + side; ++x)
                for (int c = 0; c < 3; ++c)
                    s.image.at(c, y, x) = rng.uniform(lo[0][c], hi[0][c]);
    } else {
        const int r = rng.uniform_int(8, 15);
        const int cx = rng.uniform_int(r, W - 1 - r);
        const int cy = rng.uniform_int(r, H - 1 - r);
        s.bbox = {cx - r, cy - r, 2 * r + 1, 2 * r + 1};
        for (int y = cy - r; y <= cy + r; ++y)
            for (int x = cx - r; x <= cx + r; ++x) {
                const int dx = x - cx, dy = y - cy;
                if (dx * dx + dy * dy <= r * r)
                    for (int c = 0; c < 3; ++c)
                        s.image.at(c, y, x) = rng.uniform(lo[1][c], hi[1][c]);
            }
    }
    return s;
}

std::vector<FixtureSample> generate_fixture_dataset(const FixtureDatasetSpec& spec, int n) {
    require(n >= 1, "generate_fixture_dataset: n must be >= 1");
    std::vector<FixtureSample> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(generate_fixture_sample(spec, i));
    return out;
}

// ---------------------------------------------------------------------------
// Layer primitives (3x3 conv stride 1 zero-pad 1, 2x2 max pool stride 2)
// ---------------------------------------------------------------------------

namespace {

void conv3x3_forward(const double* in, int in_c, int h, int w,
                     const double* weights, const double* bias, int out_c,
                     double* out) {
    const int ph = h + 2, pw = w + 2;
    std::vector<double> padded(static_cast<size_t>(in_c) * ph * pw, 0.0);
    for (int ic = 0; ic < in_c; ++ic)
        for (int y = 0; y < h; ++y)
            std::memcpy(&padded[(static_cast<size_t>(ic) * ph + y + 1) * pw + 1],
                        &in[(static_cast<size_t>(ic) * h + y) * w], sizeof(double) * w);

    for (int oc = 0; oc < out_c; ++oc) {
        double* oplane = out + static_cast<size_t>(oc) * h * w;
        std::fill(oplane, oplane + static_cast<size_t>(h) * w, bias[oc]);
        for (int ic = 0; ic < in_c; ++ic) {
            const double* pplane = padded.data() + static_cast<size_t>(ic) * ph * pw;
            const double* wk = weights + ((static_cast<size_t>(oc) * in_c + ic) * 9);
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double wv = wk[ky * 3 + kx];
                    for (int y = 0; y < h; ++y) {
                        const double* irow = pplane + static_cast<size_t>(y + ky) * pw + kx;
                        double* orow = oplane + static_cast<size_t>(y) * w;
                        for (int x = 0; x < w; ++x) orow[x] += wv * irow[x];
                    }
                }
        }
    }
}

// d(in), d(weights), d(bias) from d(out). Any of the gradient outputs may
// be null.
void conv3x3_backward(const double* in, int in_c, int h, int w,
                      const double* weights, int out_c, const double* dout,
                      double* din, double* dweights, double* dbias) {
    const int ph = h + 2, pw = w + 2;
    std::vector<double> padded(static_cast<size_t>(in_c) * ph * pw, 0.0);
    for (int ic = 0; ic < in_c; ++ic)
        for (int y = 0; y < h; ++y)
            std::memcpy(&padded[(static_cast<size_t>(ic) * ph + y + 1) * pw + 1],
                        &in[(static_cast<size_t>(ic) * h + y) * w], sizeof(double) * w);

    std::vector<double> dpadded;
    if (din) dpadded.assign(static_cast<size_t>(in_c) * ph * pw, 0.0);

    for (int oc = 0; oc < out_c; ++oc) {
        const double* doplane = dout + static_cast<size_t>(oc) * h * w;
        if (dbias) {
            double acc = 0.0;
            for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) acc += doplane[i];
            dbias[oc] += acc;
        }
        for (int ic = 0; ic < in_c; ++ic) {
            const double* pplane = padded.data() + static_cast<size_t>(ic) * ph * pw;
            const double* wk = weights + ((static_cast<size_t>(oc) * in_c + ic) * 9);
            double* dwk = dweights ? dweights + ((static_cast<size_t>(oc) * in_c + ic) * 9) : nullptr;
            double* dpplane = din ? dpadded.data() + static_cast<size_t>(ic) * ph * pw : nullptr;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double wv = wk[ky * 3 + kx];
                    double wacc = 0.0;
                    for (int y = 0; y < h; ++y) {
                        const double* irow = pplane + static_cast<size_t>(y + ky) * pw + kx;
                        const double* dorow = doplane + static_cast<size_t>(y) * w;
                        if (dwk)
                            for (int x = 0; x < w; ++x) wacc += irow[x] * dorow[x];
                        if (dpplane) {
                            double* dirow = dpplane + static_cast<size_t>(y + ky) * pw + kx;
                            for (int x = 0; x < w; ++x) dirow[x] += wv * dorow[x];
                        }
                    }
                    if (dwk) dwk[ky * 3 + kx] += wacc;
                }
        }
    }

    if (din)
        for (int ic = 0; ic < in_c; ++ic)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    din[(static_cast<size_t>(ic) * h + y) * w + x] +=
                        dpadded[(static_cast<size_t>(ic) * ph + y + 1) * pw + x + 1];
}

void relu_forward(const std::vector<double>& z, std::vector<double>& a) {
    a.resize(z.size());
    for (size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
}

// 2x2 stride-2 max pool; idx stores the flat input index of each winner.
void maxpool2_forward(const double* in, int c, int h, int w, double* out,
                      int* idx) {
    const int oh = h / 2, ow = w / 2;
    for (int ch = 0; ch < c; ++ch) {
        const double* ip = in + static_cast<size_t>(ch) * h * w;
        double* op = out + static_cast<size_t>(ch) * oh * ow;
        int* xp = idx + static_cast<size_t>(ch) * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                int best = (2 * y) * w + 2 * x;
                double bv = ip[best];
                const int cands[3] = {(2 * y) * w + 2 * x + 1, (2 * y + 1) * w + 2 * x,
                                      (2 * y + 1) * w + 2 * x + 1};
                for (int cand : cands)
                    if (ip[cand] > bv) { bv = ip[cand]; best = cand; }
                op[y * ow + x] = bv;
                xp[y * ow + x] = best + ch * h * w;
            }
    }
}

// 2x2 stride-2 average pool; linear, so the backward pass has no kinks.
void avgpool2_forward(const double* in, int c, int h, int w, double* out) {
    const int oh = h / 2, ow = w / 2;
    for (int ch = 0; ch < c; ++ch) {
        const double* ip = in + static_cast<size_t>(ch) * h * w;
        double* op = out + static_cast<size_t>(ch) * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x)
                op[y * ow + x] = 0.25 * (ip[(2 * y) * w + 2 * x] +
                                         ip[(2 * y) * w + 2 * x + 1] +
                                         ip[(2 * y + 1) * w + 2 * x] +
                                         ip[(2 * y + 1) * w + 2 * x + 1]);
    }
}

void avgpool2_backward(const double* dout, int c, int h, int w, double* din) {
    const int oh = h / 2, ow = w / 2;
    for (int ch = 0; ch < c; ++ch) {
        const double* dop = dout + static_cast<size_t>(ch) * oh * ow;
        double* dip = din + static_cast<size_t>(ch) * h * w;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                const double g = 0.25 * dop[y * ow + x];
                dip[(2 * y) * w + 2 * x] += g;
                dip[(2 * y) * w + 2 * x + 1] += g;
                dip[(2 * y + 1) * w + 2 * x] += g;
                dip[(2 * y + 1) * w + 2 * x + 1] += g;
            }
    }
}

void fc_forward(const double* in, int in_n, const double* weights,
                const double* bias, int out_n, double* out) {
    for (int o = 0; o < out_n; ++o) {
        double acc = bias[o];
        const double* wr = weights + static_cast<size_t>(o) * in_n;
        for (int i = 0; i < in_n; ++i) acc += wr[i] * in[i];
        out[o] = acc;
    }
}

void fc_backward(const double* in, int in_n, const double* weights, int out_n,
                 const double* dout, double* din, double* dweights, double* dbias) {
    if (din) std::fill(din, din + in_n, 0.0);
    for (int o = 0; o < out_n; ++o) {
        const double g = dout[o];
        const double* wr = weights + static_cast<size_t>(o) * in_n;
        double* dwr = dweights ? dweights + static_cast<size_t>(o) * in_n : nullptr;
        if (dbias) dbias[o] += g;
        for (int i = 0; i < in_n; ++i) {
            if (dwr) dwr[i] += g * in[i];
            if (din) din[i] += g * wr[i];
        }
    }
}

}  // namespace

std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

// ---------------------------------------------------------------------------
// SmallConvNet
// ---------------------------------------------------------------------------

SmallConvNet::SmallConvNet(const NetConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    require(cfg.in_h % 8 == 0 && cfg.in_w % 8 == 0,
            "SmallConvNet: input dims must be divisible by 8");
    const int flat = cfg.conv3 * (cfg.in_h / 8) * (cfg.in_w / 8);
    w1_.resize(static_cast<size_t>(cfg.conv1) * cfg.in_channels * 9);
    b1_.assign(cfg.conv1, 0.0);
    w2_.resize(static_cast<size_t>(cfg.conv2) * cfg.conv1 * 9);
    b2_.assign(cfg.conv2, 0.0);
    w3_.resize(static_cast<size_t>(cfg.conv3) * cfg.conv2 * 9);
    b3_.assign(cfg.conv3, 0.0);
    wf1_.resize(static_cast<size_t>(cfg.fc_hidden) * flat);
    bf1_.assign(cfg.fc_hidden, 0.0);
    wf2_.resize(static_cast<size_t>(cfg.num_classes) * cfg.fc_hidden);
    bf2_.assign(cfg.num_classes, 0.0);

    // He initialization.
    Rng rng(init_seed);
    auto init = [&](std::vector<double>& w, int fan_in) {
        const double s = std::sqrt(2.0 / fan_in);
        for (double& v : w) v = rng.normal(0.0, s);
    };
    init(w1_, cfg.in_channels * 9);
    init(w2_, cfg.conv1 * 9);
    init(w3_, cfg.conv2 * 9);
    init(wf1_, flat);
    init(wf2_, cfg.fc_hidden);
}

std::vector<std::string> SmallConvNet::layer_ids() {
    return {"conv1", "conv2", "conv3", "fc1", "fc2"};
}

std::array<int, 3> SmallConvNet::activation_shape(const std::string& layer_id) const {
    const int h = cfg_.in_h, w = cfg_.in_w;
    if (layer_id == "conv1") return {cfg_.conv1, h, w};
    if (layer_id == "conv2") return {cfg_.conv2, h / 2, w / 2};
    if (layer_id == "conv3") return {cfg_.conv3, h / 4, w / 4};
    if (layer_id == "fc1") return {cfg_.fc_hidden, 1, 1};
    if (layer_id == "fc2") return {cfg_.num_classes, 1, 1};
    throw std::invalid_argument("unknown layer id: " + layer_id);
}

std::vector<double> SmallConvNet::forward(const ImageTensor& img, Trace* trace) const {
    require(img.channels == cfg_.in_channels && img.height == cfg_.in_h &&
                img.width == cfg_.in_w,
            "SmallConvNet::forward: input shape mismatch");
    const int h = cfg_.in_h, w = cfg_.in_w;
    Trace local;
    Trace& t = trace ? *trace : local;

    t.z1.assign(static_cast<size_t>(cfg_.conv1) * h * w, 0.0);
    conv3x3_forward(img.data.data(), cfg_.in_channels, h, w, w1_.data(), b1_.data(),
                    cfg_.conv1, t.z1.data());
    relu_forward(t.z1, t.a1);
    t.p1.assign(static_cast<size_t>(cfg_.conv1) * (h / 2) * (w / 2), 0.0);
    t.idx1.assign(t.p1.size(), 0);
    maxpool2_forward(t.a1.data(), cfg_.conv1, h, w, t.p1.data(), t.idx1.data());

    t.z2.assign(static_cast<size_t>(cfg_.conv2) * (h / 2) * (w / 2), 0.0);
    conv3x3_forward(t.p1.data(), cfg_.conv1, h / 2, w / 2, w2_.data(), b2_.data(),
                    cfg_.conv2, t.z2.data());
    relu_forward(t.z2, t.a2);
    t.p2.assign(static_cast<size_t>(cfg_.conv2) * (h / 4) * (w / 4), 0.0);
    t.idx2.assign(t.p2.size(), 0);
    maxpool2_forward(t.a2.data(), cfg_.conv2, h / 2, w / 2, t.p2.data(), t.idx2.data());

    t.z3.assign(static_cast<size_t>(cfg_.conv3) * (h / 4) * (w / 4), 0.0);
    conv3x3_forward(t.p2.data(), cfg_.conv2, h / 4, w / 4, w3_.data(), b3_.data(),
                    cfg_.conv3, t.z3.data());
    relu_forward(t.z3, t.a3);
    t.p3.assign(static_cast<size_t>(cfg_.conv3) * (h / 8) * (w / 8), 0.0);
    avgpool2_forward(t.a3.data(), cfg_.conv3, h / 4, w / 4, t.p3.data());

    t.z4.assign(cfg_.fc_hidden, 0.0);
    fc_forward(t.p3.data(), static_cast<int>(t.p3.size()), wf1_.data(), bf1_.data(),
               cfg_.fc_hidden, t.z4.data());
    relu_forward(t.z4, t.a4);
    t.z5.assign(cfg_.num_classes, 0.0);
    fc_forward(t.a4.data(), cfg_.fc_hidden, wf2_.data(), bf2_.data(), cfg_.num_classes,
               t.z5.data());

    if (trace) {
        trace->in = img.data;
    }
    return t.z5;
}

std::vector<double> SmallConvNet::logits_from_activations(
    const std::string& layer_id, const std::vector<double>& acts) const {
    const auto shape = activation_shape(layer_id);
    require(acts.size() == static_cast<size_t>(shape[0]) * shape[1] * shape[2],
            "logits_from_activations: activation size mismatch");
    const int h = cfg_.in_h, w = cfg_.in_w;

    std::vector<double> cur = acts;
    std::vector<int> scratch_idx;

    auto pool = [&scratch_idx](std::vector<double>& v, int c, int hh, int ww) {
        std::vector<double> out(static_cast<size_t>(c) * (hh / 2) * (ww / 2));
        scratch_idx.assign(out.size(), 0);
        maxpool2_forward(v.data(), c, hh, ww, out.data(), scratch_idx.data());
        v = std::move(out);
    };

    int stage;
    if (layer_id == "conv1") stage = 1;
    else if (layer_id == "conv2") stage = 2;
    else if (layer_id == "conv3") stage = 3;
    else if (layer_id == "fc1") stage = 4;
    else stage = 5;  // fc2: activations are the logits themselves

    if (stage == 1) {
        pool(cur, cfg_.conv1, h, w);
        std::vector<double> z(static_cast<size_t>(cfg_.conv2) * (h / 2) * (w / 2));
        conv3x3_forward(cur.data(), cfg_.conv1, h / 2, w / 2, w2_.data(), b2_.data(),
                        cfg_.conv2, z.data());
        relu_forward(z, cur);
        stage = 2;
    }
    if (stage == 2) {
        pool(cur, cfg_.conv2, h / 2, w / 2);
        std::vector<double> z(static_cast<size_t>(cfg_.conv3) * (h / 4) * (w / 4));
        conv3x3_forward(cur.data(), cfg_.conv2, h / 4, w / 4, w3_.data(), b3_.data(),
                        cfg_.conv3, z.data());
        relu_forward(z, cur);
        stage = 3;
    }
    if (stage == 3) {
        std::vector<double> pooled(static_cast<size_t>(cfg_.conv3) * (h / 8) * (w / 8));
        avgpool2_forward(cur.data(), cfg_.conv3, h / 4, w / 4, pooled.data());
        cur = std::move(pooled);
        std::vector<double> z(cfg_.fc_hidden);
        fc_forward(cur.data(), static_cast<int>(cur.size()), wf1_.data(), bf1_.data(),
                   cfg_.fc_hidden, z.data());
        relu_forward(z, cur);
        stage = 4;
    }
    if (stage == 4) {
        std::vector<double> z(cfg_.num_classes);
        fc_forward(cur.data(), cfg_.fc_hidden, wf2_.data(), bf2_.data(),
                   cfg_.num_classes, z.data());
        cur = std::move(z);
    }
    return cur;
}

namespace {

void relu_backward_inplace(const std::vector<double>& post, std::vector<double>& d) {
    for (size_t i = 0; i < d.size(); ++i)
        if (post[i] <= 0.0) d[i] = 0.0;
}

void maxpool2_backward(const std::vector<int>& idx, const std::vector<double>& dout,
                       std::vector<double>& din) {
    for (size_t i = 0; i < dout.size(); ++i) din[idx[i]] += dout[i];
}

}  // namespace

std::vector<double> SmallConvNet::backprop_to_activations(
    const Trace& tr, const std::vector<double>& dlogits,
    const std::string& layer_id) const {
    if (layer_id == "fc2") return dlogits;
    const int h = cfg_.in_h, w = cfg_.in_w;

    // fc2 -> a4
    std::vector<double> da4(cfg_.fc_hidden, 0.0);
    fc_backward(tr.a4.data(), cfg_.fc_hidden, wf2_.data(), cfg_.num_classes,
                dlogits.data(), da4.data(), nullptr, nullptr);
    if (layer_id == "fc1") return da4;

    // fc1 -> p3
    std::vector<double> dz4 = da4;
    relu_backward_inplace(tr.a4, dz4);
    std::vector<double> dp3(tr.p3.size(), 0.0);
    fc_backward(tr.p3.data(), static_cast<int>(tr.p3.size()), wf1_.data(),
                cfg_.fc_hidden, dz4.data(), dp3.data(), nullptr, nullptr);

    // pool3 -> a3 (average pooling above the target layer)
    std::vector<double> da3(tr.a3.size(), 0.0);
    avgpool2_backward(dp3.data(), cfg_.conv3, h / 4, w / 4, da3.data());
    if (layer_id == "conv3") return da3;

    // conv3 -> p2
    std::vector<double> dz3 = da3;
    relu_backward_inplace(tr.a3, dz3);
    std::vector<double> dp2(tr.p2.size(), 0.0);
    conv3x3_backward(tr.p2.data(), cfg_.conv2, h / 4, w / 4, w3_.data(), cfg_.conv3,
                     dz3.data(), dp2.data(), nullptr, nullptr);
    std::vector<double> da2(tr.a2.size(), 0.0);
    maxpool2_backward(tr.idx2, dp2, da2);
    if (layer_id == "conv2") return da2;

    // conv2 -> p1
    std::vector<double> dz2 = da2;
    relu_backward_inplace(tr.a2, dz2);
    std::vector<double> dp1(tr.p1.size(), 0.0);
    conv3x3_backward(tr.p1.data(), cfg_.conv1, h / 2, w / 2, w2_.data(), cfg_.conv2,
                     dz2.data(), dp1.data(), nullptr, nullptr);
    std::vector<double> da1(tr.a1.size(), 0.0);
    maxpool2_backward(tr.idx1, dp1, da1);
    if (layer_id == "conv1") return da1;

    throw std::invalid_argument("unknown layer id: " + layer_id);
}

void SmallConvNet::Grads::init(const NetConfig& cfg) {
    const int flat = cfg.conv3 * (cfg.in_h / 8) * (cfg.in_w / 8);
    w1.assign(static_cast<size_t>(cfg.conv1) * cfg.in_channels * 9, 0.0);
    b1.assign(cfg.conv1, 0.0);
    w2.assign(static_cast<size_t>(cfg.conv2) * cfg.conv1 * 9, 0.0);
    b2.assign(cfg.conv2, 0.0);
    w3.assign(static_cast<size_t>(cfg.conv3) * cfg.conv2 * 9, 0.0);
    b3.assign(cfg.conv3, 0.0);
    wf1.assign(static_cast<size_t>(cfg.fc_hidden) * flat, 0.0);
    bf1.assign(cfg.fc_hidden, 0.0);
    wf2.assign(static_cast<size_t>(cfg.num_classes) * cfg.fc_hidden, 0.0);
    bf2.assign(cfg.num_classes, 0.0);
}

void SmallConvNet::Grads::scale(double s) {
    for (auto* v : {&w1, &b1, &w2, &b2, &w3, &b3, &wf1, &bf1, &wf2, &bf2})
        for (double& x : *v) x *= s;
}

void SmallConvNet::backprop_params(const Trace& tr, const std::vector<double>& dlogits,
                                   Grads& g) const {
    const int h = cfg_.in_h, w = cfg_.in_w;

    std::vector<double> da4(cfg_.fc_hidden, 0.0);
    fc_backward(tr.a4.data(), cfg_.fc_hidden, wf2_.data(), cfg_.num_classes,
                dlogits.data(), da4.data(), g.wf2.data(), g.bf2.data());

    std::vector<double> dz4 = da4;
    relu_backward_inplace(tr.a4, dz4);
    std::vector<double> dp3(tr.p3.size(), 0.0);
    fc_backward(tr.p3.data(), static_cast<int>(tr.p3.size()), wf1_.data(),
                cfg_.fc_hidden, dz4.data(), dp3.data(), g.wf1.data(), g.bf1.data());

    std::vector<double> da3(tr.a3.size(), 0.0);
    avgpool2_backward(dp3.data(), cfg_.conv3, h / 4, w / 4, da3.data());
    relu_backward_inplace(tr.a3, da3);
    std::vector<double> dp2(tr.p2.size(), 0.0);
    conv3x3_backward(tr.p2.data(), cfg_.conv2, h / 4, w / 4, w3_.data(), cfg_.conv3,
                     da3.data(), dp2.data(), g.w3.data(), g.b3.data());

    std::vector<double> da2(tr.a2.size(), 0.0);
    maxpool2_backward(tr.idx2, dp2, da2);
    relu_backward_inplace(tr.a2, da2);
    std::vector<double> dp1(tr.p1.size(), 0.0);
    conv3x3_backward(tr.p1.data(), cfg_.conv1, h / 2, w / 2, w2_.data(), cfg_.conv2,
                     da2.data(), dp1.data(), g.w2.data(), g.b2.data());

    std::vector<double> da1(tr.a1.size(), 0.0);
    maxpool2_backward(tr.idx1, dp1, da1);
    relu_backward_inplace(tr.a1, da1);
    conv3x3_backward(tr.in.data(), cfg_.in_channels, h, w, w1_.data(), cfg_.conv1,
                     da1.data(), nullptr, g.w1.data(), g.b1.data());
}

void SmallConvNet::sgd_step(const Grads& g, Grads& velocity, double lr,
                            double momentum) {
    auto step = [&](std::vector<double>& w, const std::vector<double>& gw,
                    std::vector<double>& v) {
        for (size_t i = 0; i < w.size(); ++i) {
            v[i] = momentum * v[i] - lr * gw[i];
            w[i] += v[i];
        }
    };
    step(w1_, g.w1, velocity.w1);
    step(b1_, g.b1, velocity.b1);
    step(w2_, g.w2, velocity.w2);
    step(b2_, g.b2, velocity.b2);
    step(w3_, g.w3, velocity.w3);
    step(b3_, g.b3, velocity.b3);
    step(wf1_, g.wf1, velocity.wf1);
    step(bf1_, g.bf1, velocity.bf1);
    step(wf2_, g.wf2, velocity.wf2);
    step(bf2_, g.bf2, velocity.bf2);
}

std::vector<double>& SmallConvNet::weights(const std::string& layer_id) {
    if (layer_id == "conv1") return w1_;
    if (layer_id == "conv2") return w2_;
    if (layer_id == "conv3") return w3_;
    if (layer_id == "fc1") return wf1_;
    if (layer_id == "fc2") return wf2_;
    throw std::invalid_argument("unknown layer id: " + layer_id);
}

std::vector<double>& SmallConvNet::biases(const std::string& layer_id) {
    if (layer_id == "conv1") return b1_;
    if (layer_id == "conv2") return b2_;
    if (layer_id == "conv3") return b3_;
    if (layer_id == "fc1") return bf1_;
    if (layer_id == "fc2") return bf2_;
    throw std::invalid_argument("unknown layer id: " + layer_id);
}

const std::vector<double>& SmallConvNet::weights(const std::string& layer_id) const {
    return const_cast<SmallConvNet*>(this)->weights(layer_id);
}
const std::vector<double>& SmallConvNet::biases(const std::string& layer_id) const {
    return const_cast<SmallConvNet*>(this)->biases(layer_id);
}

namespace {

void redraw(std::vector<double>& v, Rng& rng) {
    if (v.empty()) return;
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / v.size());
    for (double& x : v) x = rng.normal(mean, sd);
}

}  // namespace

void SmallConvNet::randomize_layer(const std::string& layer_id, std::uint64_t seed) {
    Rng rng(Rng::mix(seed, std::hash<std::string>{}(layer_id)));
    redraw(weights(layer_id), rng);
    redraw(biases(layer_id), rng);
}

bool SmallConvNet::operator==(const SmallConvNet& o) const {
    return w1_ == o.w1_ && b1_ == o.b1_ && w2_ == o.w2_ && b2_ == o.b2_ &&
           w3_ == o.w3_ && b3_ == o.b3_ && wf1_ == o.wf1_ && bf1_ == o.bf1_ &&
           wf2_ == o.wf2_ && bf2_ == o.bf2_;
}

// ---------------------------------------------------------------------------
// Checkpoint io: magic, config ints, raw little-endian doubles.
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'G', 'C', 'N', 'E', 'T', '0', '0', '1'};

void write_vec(std::ofstream& f, const std::vector<double>& v) {
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
void read_vec(std::ifstream& f, std::vector<double>& v) {
    f.read(reinterpret_cast<char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}
}  // namespace

void SmallConvNet::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 8);
    const std::int32_t ints[8] = {cfg_.in_channels, cfg_.in_h, cfg_.in_w, cfg_.conv1,
                                  cfg_.conv2, cfg_.conv3, cfg_.fc_hidden,
                                  cfg_.num_classes};
    f.write(reinterpret_cast<const char*>(ints), sizeof(ints));
    for (const auto* v : {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_, &wf1_, &bf1_, &wf2_, &bf2_})
        write_vec(f, *v);
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

SmallConvNet SmallConvNet::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    std::int32_t ints[8];
    f.read(reinterpret_cast<char*>(ints), sizeof(ints));
    NetConfig cfg;
    cfg.in_channels = ints[0];
    cfg.in_h = ints[1];
    cfg.in_w = ints[2];
    cfg.conv1 = ints[3];
    cfg.conv2 = ints[4];
    cfg.conv3 = ints[5];
    cfg.fc_hidden = ints[6];
    cfg.num_classes = ints[7];
    SmallConvNet net(cfg, 0);
    for (auto* v : {&net.w1_, &net.b1_, &net.w2_, &net.b2_, &net.w3_, &net.b3_,
                    &net.wf1_, &net.bf1_, &net.wf2_, &net.bf2_})
        read_vec(f, *v);
    if (!f) throw std::runtime_error("checkpoint truncated: " + path);
    return net;
}

// ---------------------------------------------------------------------------
// FixtureAdapter
// ---------------------------------------------------------------------------

std::vector<std::string> FixtureAdapter::layer_catalog() const {
    return SmallConvNet::layer_ids();
}

std::array<int, 3> FixtureAdapter::input_shape() const {
    const auto& c = net_.config();
    return {c.in_channels, c.in_h, c.in_w};
}

void FixtureAdapter::check_input(const ImageTensor& img) const {
    const auto s = input_shape();
    require(img.channels == s[0] && img.height == s[1] && img.width == s[2],
            "FixtureAdapter: input shape mismatch");
}

std::vector<std::vector<double>> FixtureAdapter::class_scores_batch(
    const std::vector<ImageTensor>& batch) {
    std::vector<std::vector<double>> out;
    out.reserve(batch.size());
    for (const auto& img : batch) {
        check_input(img);
        out.push_back(softmax(net_.forward(img)));
        ++queries_;
    }
    return out;
}

namespace {

void check_layer(const std::string& layer_id) {
    const auto ids = SmallConvNet::layer_ids();
    if (std::find(ids.begin(), ids.end(), layer_id) == ids.end())
        throw std::invalid_argument("unknown layer id: " + layer_id);
}

std::vector<double> tap_activations(const SmallConvNet::Trace& tr,
                                    const std::string& layer_id) {
    if (layer_id == "conv1") return tr.a1;
    if (layer_id == "conv2") return tr.a2;
    if (layer_id == "conv3") return tr.a3;
    if (layer_id == "fc1") return tr.a4;
    return tr.z5;  // fc2
}

}  // namespace

ActivationBundle FixtureAdapter::activations_with_gradients(
    const ImageTensor& img, int class_index, const std::string& layer_id) {
    check_input(img);
    check_layer(layer_id);
    require(class_index >= 0 && class_index < num_classes(),
            "activations_with_gradients: class index out of range");

    SmallConvNet::Trace tr;
    net_.forward(img, &tr);
    ++queries_;

    std::vector<double> dlogits(num_classes(), 0.0);
    dlogits[class_index] = 1.0;

    ActivationBundle b;
    const auto shape = net_.activation_shape(layer_id);
    b.channels = shape[0];
    b.height = shape[1];
    b.width = shape[2];
    b.class_index = class_index;
    b.layer_id = layer_id;
    b.activations = tap_activations(tr, layer_id);
    b.gradients = net_.backprop_to_activations(tr, dlogits, layer_id);
    return b;
}

ActivationBundle FixtureAdapter::activations(const ImageTensor& img,
                                             const std::string& layer_id) {
    check_input(img);
    check_layer(layer_id);

    SmallConvNet::Trace tr;
    net_.forward(img, &tr);
    ++queries_;

    ActivationBundle b;
    const auto shape = net_.activation_shape(layer_id);
    b.channels = shape[0];
    b.height = shape[1];
    b.width = shape[2];
    b.layer_id = layer_id;
    b.activations = tap_activations(tr, layer_id);
    return b;
}

std::unique_ptr<ModelAdapter> FixtureAdapter::randomize_parameters(
    const std::string& layer_id, std::uint64_t seed) const {
    check_layer(layer_id);
    SmallConvNet copy = net_;
    copy.randomize_layer(layer_id, seed);
    return std::make_unique<FixtureAdapter>(std::move(copy));
}

std::unique_ptr<ModelAdapter> FixtureAdapter::clone() const {
    return std::make_unique<FixtureAdapter>(net_);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

double evaluate_accuracy(const SmallConvNet& net,
                         const std::vector<FixtureSample>& samples) {
    if (samples.empty()) return 0.0;
    int hits = 0;
    for (const auto& s : samples) {
        const auto logits = net.forward(s.image);
        const int pred = static_cast<int>(
            std::max_element(logits.begin(), logits.end()) - logits.begin());
        if (pred == s.label) ++hits;
    }
    return static_cast<double>(hits) / samples.size();
}

FixtureAdapter train_fixture_model(const std::vector<FixtureSample>& dataset,
                                   int epochs, std::uint64_t seed,
                                   TrainReport* report, const TrainConfig& cfg) {
    require(!dataset.empty(), "train_fixture_model: empty dataset");
    require(epochs >= 1, "train_fixture_model: epochs must be >= 1");

    const int n = static_cast<int>(dataset.size());
    const int holdout = std::max(1, static_cast<int>(n * cfg.holdout_fraction));
    const int train_n = n - holdout;
    require(train_n >= 1, "train_fixture_model: dataset too small for holdout split");

    std::vector<FixtureSample> holdout_set(dataset.end() - holdout, dataset.end());

    NetConfig net_cfg = cfg.net;
    net_cfg.in_channels = dataset[0].image.channels;
    net_cfg.in_h = dataset[0].image.height;
    net_cfg.in_w = dataset[0].image.width;
    SmallConvNet net(net_cfg, Rng::mix(seed, 0x1EAF));

    SmallConvNet::Grads grads, velocity;
    grads.init(net_cfg);
    velocity.init(net_cfg);

    Rng shuffle_rng(Rng::mix(seed, 0x5EED));
    std::vector<int> order(train_n);
    std::iota(order.begin(), order.end(), 0);

    TrainReport rep;
    rep.seed = seed;
    rep.epochs = epochs;
    rep.train_count = train_n;
    rep.holdout_count = holdout;

    for (int e = 0; e < epochs; ++e) {
        const double lr =
            cfg.lr * std::pow(0.5, cfg.lr_decay_epochs > 0 ? e / cfg.lr_decay_epochs : 0);
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (int start = 0; start < train_n; start += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, train_n - start);
            grads.init(net_cfg);  // zero
            for (int bi = 0; bi < bs; ++bi) {
                const auto& s = dataset[order[start + bi]];
                SmallConvNet::Trace tr;
                const auto logits = net.forward(s.image, &tr);
                const auto probs = softmax(logits);
                loss_sum += -std::log(std::max(probs[s.label], 1e-12));
                std::vector<double> dlogits = probs;
                dlogits[s.label] -= 1.0;
                net.backprop_params(tr, dlogits, grads);
            }
            grads.scale(1.0 / bs);
            net.sgd_step(grads, velocity, lr, cfg.momentum);
        }
        rep.epoch_losses.push_back(loss_sum / train_n);
        rep.epoch_holdout_accuracy.push_back(evaluate_accuracy(net, holdout_set));
        if (rep.epoch_losses.back() < cfg.early_stop_loss &&
            rep.epoch_holdout_accuracy.back() >= cfg.target_accuracy)
            break;
    }

    rep.final_holdout_accuracy = rep.epoch_holdout_accuracy.back();
    if (report) *report = rep;

    if (rep.final_holdout_accuracy < cfg.target_accuracy)
        throw TrainingFailure("fixture training missed target accuracy: got " +
                              std::to_string(rep.final_holdout_accuracy) +
                              ", need " + std::to_string(cfg.target_accuracy));

    return FixtureAdapter(std::move(net));
}

}  // namespace groupcam
