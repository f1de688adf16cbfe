#pragma once

#include <string>

#include "mmm/tensor.hpp"

namespace mmm {

template <class Real>
struct GruParams {
    Tensor<Real> wz, uz, bz;
    Tensor<Real> wr, ur, br;
    Tensor<Real> wh, uh, bh;

    static GruParams init(int d, Rng& rng, Real std_dev = Real(0.02)) {
        GruParams p;
        p.wz = Tensor<Real>::randn({d, d}, rng, std_dev);
        p.uz = Tensor<Real>::randn({d, d}, rng, std_dev);
        p.bz = Tensor<Real>::zeros({d, 1}, true);
        p.wr = Tensor<Real>::randn({d, d}, rng, std_dev);
        p.ur = Tensor<Real>::randn({d, d}, rng, std_dev);
        p.br = Tensor<Real>::zeros({d, 1}, true);
        p.wh = Tensor<Real>::randn({d, d}, rng, std_dev);
        p.uh = Tensor<Real>::randn({d, d}, rng, std_dev);
        p.bh = Tensor<Real>::zeros({d, 1}, true);
        return p;
    }

    void append_params(std::vector<std::pair<std::string, Tensor<Real>>>& out,
                       const std::string& prefix) {
        out.emplace_back(prefix + "wz", wz);
        out.emplace_back(prefix + "uz", uz);
        out.emplace_back(prefix + "bz", bz);
        out.emplace_back(prefix + "wr", wr);
        out.emplace_back(prefix + "ur", ur);
        out.emplace_back(prefix + "br", br);
        out.emplace_back(prefix + "wh", wh);
        out.emplace_back(prefix + "uh", uh);
        out.emplace_back(prefix + "bh", bh);
    }
};

// Update-gate-blends-candidate convention:
//   z = sigmoid(Wz x + Uz s + bz)
//   r = sigmoid(Wr x + Ur s + br)
//   hcand = tanh(Wh x + Uh (r .* s) + bh)
//   out = (1 - z) .* s + z .* hcand
template <class Real>
Tensor<Real> gru_cell(const Tensor<Real>& s_prev, const Tensor<Real>& x, const GruParams<Real>& p) {
    if (s_prev.shape() != x.shape()) throw ShapeError("gru_cell: state/input shape mismatch");
    Tensor<Real> z = sigmoid(add(add(matmul(p.wz, x), matmul(p.uz, s_prev)), p.bz));
    Tensor<Real> r = sigmoid(add(add(matmul(p.wr, x), matmul(p.ur, s_prev)), p.br));
    Tensor<Real> hcand = tanh(add(add(matmul(p.wh, x), matmul(p.uh, mul(r, s_prev))), p.bh));
    Tensor<Real> one = Tensor<Real>::ones(z.shape());
    return add(mul(sub(one, z), s_prev), mul(z, hcand));
}

}  // namespace mmm
