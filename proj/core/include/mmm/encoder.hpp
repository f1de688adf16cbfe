#pragma once

#include <string>
#include <vector>

#include "mmm/data.hpp"
#include "mmm/rng.hpp"
#include "mmm/tensor.hpp"

namespace mmm {

struct EncoderConfig {
    int vocab_size = 0;
    int hidden_dim = 64;
    int layers = 2;
    int heads = 4;
    int max_len = 512;
    double dropout = 0.1;
    uint64_t seed = 0;

    void validate() const {
        if (vocab_size < 4) throw UsageError("encoder config: vocab_size must cover reserved ids");
        if (hidden_dim < 1 || layers < 1 || heads < 1) throw UsageError("encoder config: bad dims");
        if (hidden_dim % heads != 0) throw UsageError("encoder config: hidden_dim % heads != 0");
        if (max_len < 1) throw UsageError("encoder config: max_len must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw UsageError("encoder config: dropout in [0,1)");
    }
};

template <class Real>
using NamedParams = std::vector<std::pair<std::string, Tensor<Real>>>;

// Post-norm transformer encoder over packed sequences. Produces the token
// representation matrix H (hidden_dim x length); pad positions are masked out
// of every attention row.
template <class Real>
class Encoder {
  public:
    struct Layer {
        Tensor<Real> wq, wk, wv, wo;          // d x d
        Tensor<Real> bq, bv, bo;              // d (no key bias: it shifts every
                                              // attention row equally and cancels
                                              // in the softmax)
        Tensor<Real> ln1_g, ln1_b;            // d
        Tensor<Real> w_ff1, b_ff1;            // 4d x d, 4d
        Tensor<Real> w_ff2, b_ff2;            // d x 4d, d
        Tensor<Real> ln2_g, ln2_b;            // d
    };

    Encoder() = default;

    explicit Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(mix_seed(cfg_.seed, "encoder-init"));
        const int d = cfg_.hidden_dim;
        const int ff = 4 * d;
        const Real std_dev = Real(0.02);
        tok_emb_ = Tensor<Real>::randn({cfg_.vocab_size, d}, rng, std_dev);
        pos_emb_ = Tensor<Real>::randn({cfg_.max_len, d}, rng, std_dev);
        layers_.resize(static_cast<size_t>(cfg_.layers));
        for (auto& l : layers_) {
            l.wq = Tensor<Real>::randn({d, d}, rng, std_dev);
            l.wk = Tensor<Real>::randn({d, d}, rng, std_dev);
            l.wv = Tensor<Real>::randn({d, d}, rng, std_dev);
            l.wo = Tensor<Real>::randn({d, d}, rng, std_dev);
            l.bq = Tensor<Real>::zeros({d, 1}, true);
            l.bv = Tensor<Real>::zeros({d, 1}, true);
            l.bo = Tensor<Real>::zeros({d, 1}, true);
            l.ln1_g = Tensor<Real>::ones({d, 1}, true);
            l.ln1_b = Tensor<Real>::zeros({d, 1}, true);
            l.w_ff1 = Tensor<Real>::randn({ff, d}, rng, std_dev);
            l.b_ff1 = Tensor<Real>::zeros({ff, 1}, true);
            l.w_ff2 = Tensor<Real>::randn({d, ff}, rng, std_dev);
            l.b_ff2 = Tensor<Real>::zeros({d, 1}, true);
            l.ln2_g = Tensor<Real>::ones({d, 1}, true);
            l.ln2_b = Tensor<Real>::zeros({d, 1}, true);
        }
    }

    const EncoderConfig& config() const { return cfg_; }
    std::vector<Layer>& layers() { return layers_; }
    Tensor<Real>& token_embedding() { return tok_emb_; }
    Tensor<Real>& position_embedding() { return pos_emb_; }

    NamedParams<Real> params() {
        NamedParams<Real> out;
        out.emplace_back("encoder.tok_emb", tok_emb_);
        out.emplace_back("encoder.pos_emb", pos_emb_);
        for (size_t i = 0; i < layers_.size(); ++i) {
            auto& l = layers_[i];
            const std::string p = "encoder.layer" + std::to_string(i) + ".";
            out.emplace_back(p + "wq", l.wq);
            out.emplace_back(p + "wk", l.wk);
            out.emplace_back(p + "wv", l.wv);
            out.emplace_back(p + "wo", l.wo);
            out.emplace_back(p + "bq", l.bq);
            out.emplace_back(p + "bv", l.bv);
            out.emplace_back(p + "bo", l.bo);
            out.emplace_back(p + "ln1_g", l.ln1_g);
            out.emplace_back(p + "ln1_b", l.ln1_b);
            out.emplace_back(p + "w_ff1", l.w_ff1);
            out.emplace_back(p + "b_ff1", l.b_ff1);
            out.emplace_back(p + "w_ff2", l.w_ff2);
            out.emplace_back(p + "b_ff2", l.b_ff2);
            out.emplace_back(p + "ln2_g", l.ln2_g);
            out.emplace_back(p + "ln2_b", l.ln2_b);
        }
        return out;
    }

    // Forward pass. Train mode consumes dropout draws from `rng`; eval mode
    // is pure in the weights and input.
    Tensor<Real> encode(const EncodedSequence& seq, bool train, Rng& rng) const {
        const int l = seq.length();
        if (l < 1) throw UsageError("encode: empty sequence");
        if (l > cfg_.max_len) throw UsageError("encode: sequence longer than max_len");
        for (int id : seq.ids)
            if (id < 0 || id >= cfg_.vocab_size) throw UsageError("encode: token id outside vocabulary");

        const int d = cfg_.hidden_dim;
        const int dh = d / cfg_.heads;
        const Real rate = static_cast<Real>(cfg_.dropout);

        std::vector<int> positions(static_cast<size_t>(l));
        for (int j = 0; j < l; ++j) positions[static_cast<size_t>(j)] = j;

        Tensor<Real> x = add(embed_cols(tok_emb_, seq.ids), embed_cols(pos_emb_, positions));
        x = dropout(x, rate, train, rng);

        Tensor<Real> mask = pad_mask(seq);
        for (const auto& layer : layers_) {
            // multi-head self-attention
            Tensor<Real> q = add_col_broadcast(matmul(layer.wq, x), layer.bq);
            Tensor<Real> k = matmul(layer.wk, x);
            Tensor<Real> v = add_col_broadcast(matmul(layer.wv, x), layer.bv);
            std::vector<Tensor<Real>> head_out;
            head_out.reserve(static_cast<size_t>(cfg_.heads));
            for (int h = 0; h < cfg_.heads; ++h) {
                Tensor<Real> qh = slice_rows(q, h * dh, (h + 1) * dh);
                Tensor<Real> kh = slice_rows(k, h * dh, (h + 1) * dh);
                Tensor<Real> vh = slice_rows(v, h * dh, (h + 1) * dh);
                Tensor<Real> scores =
                    scale(matmul(transpose(qh), kh), Real(1) / std::sqrt(static_cast<Real>(dh)));
                Tensor<Real> attn = softmax_rows(add(scores, mask));
                attn = dropout(attn, rate, train, rng);
                head_out.push_back(matmul(vh, transpose(attn)));
            }
            Tensor<Real> attn_out =
                add_col_broadcast(matmul(layer.wo, concat_rows(head_out)), layer.bo);
            attn_out = dropout(attn_out, rate, train, rng);
            x = layer_norm_cols(add(x, attn_out), layer.ln1_g, layer.ln1_b);

            // position-wise feed-forward
            Tensor<Real> f = tanh(add_col_broadcast(matmul(layer.w_ff1, x), layer.b_ff1));
            f = add_col_broadcast(matmul(layer.w_ff2, f), layer.b_ff2);
            f = dropout(f, rate, train, rng);
            x = layer_norm_cols(add(x, f), layer.ln2_g, layer.ln2_b);
        }
        return x;
    }

  private:
    Tensor<Real> pad_mask(const EncodedSequence& seq) const {
        const int l = seq.length();
        Tensor<Real> mask = Tensor<Real>::zeros({l, l});
        const Real neg_inf = -std::numeric_limits<Real>::infinity();
        for (int j = 0; j < l; ++j) {
            if (seq.attention_mask[static_cast<size_t>(j)] == 0)
                for (int i = 0; i < l; ++i) mask.value()[static_cast<size_t>(i) * l + j] = neg_inf;
        }
        return mask;
    }

    EncoderConfig cfg_;
    Tensor<Real> tok_emb_, pos_emb_;
    std::vector<Layer> layers_;
};

// First-column (leading special token) pooling.
template <class Real>
Tensor<Real> pooled(const Tensor<Real>& h) {
    if (h.cols() < 1) throw UsageError("pooled: empty representation");
    return slice_cols(h, 0, 1);
}

}  // namespace mmm
