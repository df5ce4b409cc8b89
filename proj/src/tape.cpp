#include "tppt/tape.hpp"

#include <cmath>
#include <memory>

#include "tppt/error.hpp"

namespace tppt {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

int Tape::push(Tensor value, std::function<void(Tape&)> back) {
    Node node;
    node.grad = Tensor::zeros(value.shape());
    node.value = std::move(value);
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::constant(Tensor value) { return push(std::move(value), {}); }

int Tape::param(Parameter& p) {
    const int self = static_cast<int>(nodes_.size());
    Parameter* target = &p;
    return push(p.value, [self, target](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        double* dst = target->grad.data();
        const double* src = g.data();
        for (std::int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
    });
}

int Tape::lookup(int table, std::vector<std::int32_t> ids, std::vector<std::int64_t> lead_shape) {
    const Tensor& tab = value(table);
    const std::int64_t C = tab.cols();
    const std::int64_t R = tab.rows();
    std::int64_t n = 1;
    for (std::int64_t d : lead_shape) n *= d;
    if (n != static_cast<std::int64_t>(ids.size())) {
        throw validation_error("lookup: id count does not match lead shape");
    }
    std::vector<std::int64_t> out_shape = std::move(lead_shape);
    out_shape.push_back(C);
    Tensor out(std::move(out_shape));
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t row = ids[static_cast<std::size_t>(i)];
        if (row < 0 || row >= R) throw validation_error("lookup: id out of table range");
        const double* src = tab.data() + row * C;
        double* dst = out.data() + i * C;
        for (std::int64_t d = 0; d < C; ++d) dst[d] = src[d];
    }
    const int self = static_cast<int>(nodes_.size());
    auto ids_keep = std::make_shared<std::vector<std::int32_t>>(std::move(ids));
    return push(std::move(out), [self, table, ids_keep, C](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        Tensor& gt = t.grad_ref(table);
        const auto& idv = *ids_keep;
        for (std::size_t i = 0; i < idv.size(); ++i) {
            const double* src = g.data() + static_cast<std::int64_t>(i) * C;
            double* dst = gt.data() + static_cast<std::int64_t>(idv[i]) * C;
            for (std::int64_t d = 0; d < C; ++d) dst[d] += src[d];
        }
    });
}

int Tape::add(int a, int b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw validation_error("add: shape mismatch");
    Tensor out = va;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), [self, a, b](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        Tensor& ga = t.grad_ref(a);
        Tensor& gb = t.grad_ref(b);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

int Tape::add_inplace3(int a, int b, int c) { return add(add(a, b), c); }

int Tape::add_rowbcast(int x, Tensor broadcast) {
    const Tensor& vx = value(x);
    if (broadcast.numel() == 0 || vx.numel() % broadcast.numel() != 0) {
        throw validation_error("add_rowbcast: broadcast shape does not divide input");
    }
    Tensor out = vx;
    const std::int64_t block = broadcast.numel();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += broadcast[i % block];
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), [self, x](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        Tensor& gx = t.grad_ref(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
}

int Tape::scale(int x, double factor) {
    Tensor out = value(x);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= factor;
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), [self, x, factor](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        Tensor& gx = t.grad_ref(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += factor * g[i];
    });
}

int Tape::linear(int x, int w, int b) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    const std::int64_t in = vw.dim(0);
    const std::int64_t out_dim = vw.dim(1);
    if (vx.cols() != in) throw validation_error("linear: input width does not match weight");

    std::vector<std::int64_t> out_shape = vx.shape();
    out_shape.back() = out_dim;
    Tensor out(std::move(out_shape));
    matmul(vx, vw, out, false);
    if (b >= 0) {
        const Tensor& vb = value(b);
        if (vb.numel() != out_dim) throw validation_error("linear: bias width mismatch");
        for (std::int64_t r = 0; r < out.rows(); ++r) {
            double* row = out.data() + r * out_dim;
            for (std::int64_t j = 0; j < out_dim; ++j) row[j] += vb[j];
        }
    }
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), [self, x, w, b, out_dim](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        matmul_transB(g, t.value(w), t.grad_ref(x), true);
        matmul_transA(t.value(x), g, t.grad_ref(w), true);
        if (b >= 0) {
            Tensor& gb = t.grad_ref(b);
            for (std::int64_t r = 0; r < g.rows(); ++r) {
                const double* row = g.data() + r * out_dim;
                for (std::int64_t j = 0; j < out_dim; ++j) gb[j] += row[j];
            }
        }
    });
}

int Tape::layer_norm(int x, int gain, int bias, double eps) {
    const Tensor& vx = value(x);
    const std::int64_t D = vx.cols();
    const std::int64_t R = vx.rows();
    if (D < 1) throw validation_error("layer_norm: empty last dimension");
    const Tensor& vg = value(gain);
    const Tensor& vb = value(bias);
    if (vg.numel() != D || vb.numel() != D) throw validation_error("layer_norm: affine shape mismatch");

    Tensor out(vx.shape());
    auto xhat = std::make_shared<Tensor>(vx.shape());
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(R));
    for (std::int64_t r = 0; r < R; ++r) {
        const double* row = vx.data() + r * D;
        double mean = 0.0;
        for (std::int64_t j = 0; j < D; ++j) mean += row[j];
        mean /= static_cast<double>(D);
        double var = 0.0;
        for (std::int64_t j = 0; j < D; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(D);
        const double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(r)] = istd;
        double* hat = xhat->data() + r * D;
        double* y = out.data() + r * D;
        for (std::int64_t j = 0; j < D; ++j) {
            hat[j] = (row[j] - mean) * istd;
            y[j] = vg[j] * hat[j] + vb[j];
        }
    }
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), [self, x, gain, bias, xhat, inv_std, D, R](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& vg = t.value(gain);
        Tensor& gx = t.grad_ref(x);
        Tensor& ggain = t.grad_ref(gain);
        Tensor& gbias = t.grad_ref(bias);
        for (std::int64_t r = 0; r < R; ++r) {
            const double* grow = g.data() + r * D;
            const double* hat = xhat->data() + r * D;
            const double istd = (*inv_std)[static_cast<std::size_t>(r)];
            double sum_dxhat = 0.0;
            double sum_dxhat_hat = 0.0;
            for (std::int64_t j = 0; j < D; ++j) {
                const double dxhat = grow[j] * vg[j];
                sum_dxhat += dxhat;
                sum_dxhat_hat += dxhat * hat[j];
                ggain[j] += grow[j] * hat[j];
                gbias[j] += grow[j];
            }
            double* gxrow = gx.data() + r * D;
            const double inv_d = 1.0 / static_cast<double>(D);
            for (std::int64_t j = 0; j < D; ++j) {
                const double dxhat = grow[j] * vg[j];
                gxrow[j] += istd * (dxhat - inv_d * sum_dxhat - inv_d * hat[j] * sum_dxhat_hat);
            }
        }
    });
}

int Tape::silu(int x) {
    const Tensor& vx = value(x);
    Tensor out(vx.shape());
    for (std::int64_t i = 0; i < vx.numel(); ++i) out[i] = vx[i] * sigmoid(vx[i]);
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), [self, x](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& vx = t.value(x);
        Tensor& gx = t.grad_ref(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            const double s = sigmoid(vx[i]);
            gx[i] += g[i] * s * (1.0 + vx[i] * (1.0 - s));
        }
    });
}

int Tape::softmax(int x) {
    const Tensor& vx = value(x);
    const std::int64_t D = vx.cols();
    const std::int64_t R = vx.rows();
    Tensor out(vx.shape());
    for (std::int64_t r = 0; r < R; ++r) {
        const double* row = vx.data() + r * D;
        double* y = out.data() + r * D;
        double maxv = row[0];
        for (std::int64_t j = 1; j < D; ++j) maxv = std::max(maxv, row[j]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < D; ++j) {
            y[j] = std::exp(row[j] - maxv);
            sum += y[j];
        }
        const double inv = 1.0 / sum;
        for (std::int64_t j = 0; j < D; ++j) y[j] *= inv;
    }
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), [self, x, D, R](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad_ref(x);
        for (std::int64_t r = 0; r < R; ++r) {
            const double* grow = g.data() + r * D;
            const double* yrow = y.data() + r * D;
            double dot = 0.0;
            for (std::int64_t j = 0; j < D; ++j) dot += grow[j] * yrow[j];
            double* gxrow = gx.data() + r * D;
            for (std::int64_t j = 0; j < D; ++j) gxrow[j] += yrow[j] * (grow[j] - dot);
        }
    });
}

int Tape::sdpa(int q, int k, int v, int heads) {
    const Tensor& vq = value(q);
    const Tensor& vk = value(k);
    const Tensor& vv = value(v);
    if (vq.rank() != 3) throw validation_error("sdpa: queries must be rank-3 (B, Tq, C)");
    const std::int64_t B = vq.dim(0);
    const std::int64_t Tq = vq.dim(1);
    const std::int64_t C = vq.dim(2);
    if (heads < 1 || C % heads != 0) throw validation_error("sdpa: hidden size not divisible by head count");
    const std::int64_t Dh = C / heads;

    const bool shared_kv = vk.rank() == 2;
    if (!shared_kv && (vk.rank() != 3 || vk.dim(0) != B)) {
        throw validation_error("sdpa: keys must be rank-2 or batch-matched rank-3");
    }
    const std::int64_t Tk = shared_kv ? vk.dim(0) : vk.dim(1);
    const std::int64_t Ck = vk.cols();
    if (!vk.same_shape(vv)) throw validation_error("sdpa: key/value shape mismatch");
    if (Ck != C && Ck != Dh) throw validation_error("sdpa: key width must be C or C/heads");
    const bool per_head_kv = (Ck == C);
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(Dh));

    Tensor out({B, Tq, C});
    auto attn = std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(B * heads * Tq * Tk), 0.0);

    const double* pq = vq.data();
    const double* pk = vk.data();
    const double* pv = vv.data();
    double* po = out.data();
    for (std::int64_t b = 0; b < B; ++b) {
        const double* kb = shared_kv ? pk : pk + b * Tk * Ck;
        const double* vb = shared_kv ? pv : pv + b * Tk * Ck;
        for (std::int64_t h = 0; h < heads; ++h) {
            const std::int64_t qoff = h * Dh;
            const std::int64_t koff = per_head_kv ? h * Dh : 0;
            double* a_bh = attn->data() + ((b * heads + h) * Tq) * Tk;
            for (std::int64_t i = 0; i < Tq; ++i) {
                const double* qrow = pq + (b * Tq + i) * C + qoff;
                double* arow = a_bh + i * Tk;
                double maxv = -std::numeric_limits<double>::infinity();
                for (std::int64_t j = 0; j < Tk; ++j) {
                    const double* krow = kb + j * Ck + koff;
                    double s = 0.0;
                    for (std::int64_t d = 0; d < Dh; ++d) s += qrow[d] * krow[d];
                    arow[j] = s * att_scale;
                    maxv = std::max(maxv, arow[j]);
                }
                double sum = 0.0;
                for (std::int64_t j = 0; j < Tk; ++j) {
                    arow[j] = std::exp(arow[j] - maxv);
                    sum += arow[j];
                }
                const double inv = 1.0 / sum;
                double* orow = po + (b * Tq + i) * C + qoff;
                for (std::int64_t d = 0; d < Dh; ++d) orow[d] = 0.0;
                for (std::int64_t j = 0; j < Tk; ++j) {
                    arow[j] *= inv;
                    const double a = arow[j];
                    if (a == 0.0) continue;
                    const double* vrow = vb + j * Ck + koff;
                    for (std::int64_t d = 0; d < Dh; ++d) orow[d] += a * vrow[d];
                }
            }
        }
    }

    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), [self, q, k, v, attn, B, Tq, Tk, C, Ck, Dh, heads, per_head_kv,
                                 shared_kv, att_scale](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        const Tensor& vq = t.value(q);
        const Tensor& vk = t.value(k);
        const Tensor& vv = t.value(v);
        Tensor& gq = t.grad_ref(q);
        Tensor& gk = t.grad_ref(k);
        Tensor& gv = t.grad_ref(v);

        std::vector<double> d_attn(static_cast<std::size_t>(Tk));
        for (std::int64_t b = 0; b < B; ++b) {
            const std::int64_t kv_base = shared_kv ? 0 : b * Tk * Ck;
            for (std::int64_t h = 0; h < heads; ++h) {
                const std::int64_t qoff = h * Dh;
                const std::int64_t koff = per_head_kv ? h * Dh : 0;
                const double* a_bh = attn->data() + ((b * heads + h) * Tq) * Tk;
                for (std::int64_t i = 0; i < Tq; ++i) {
                    const double* arow = a_bh + i * Tk;
                    const double* grow = g.data() + (b * Tq + i) * C + qoff;
                    // dA = gO . V^T, plus dV accumulation
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < Tk; ++j) {
                        const double* vrow = vv.data() + kv_base + j * Ck + koff;
                        double da = 0.0;
                        for (std::int64_t d = 0; d < Dh; ++d) da += grow[d] * vrow[d];
                        d_attn[static_cast<std::size_t>(j)] = da;
                        dot += da * arow[j];
                        const double a = arow[j];
                        if (a != 0.0) {
                            double* gvrow = gv.data() + kv_base + j * Ck + koff;
                            for (std::int64_t d = 0; d < Dh; ++d) gvrow[d] += a * grow[d];
                        }
                    }
                    // softmax backward, then dQ/dK
                    const double* qrow = vq.data() + (b * Tq + i) * C + qoff;
                    double* gqrow = gq.data() + (b * Tq + i) * C + qoff;
                    for (std::int64_t j = 0; j < Tk; ++j) {
                        const double ds = arow[j] * (d_attn[static_cast<std::size_t>(j)] - dot) * att_scale;
                        if (ds == 0.0) continue;
                        const double* krow = vk.data() + kv_base + j * Ck + koff;
                        double* gkrow = gk.data() + kv_base + j * Ck + koff;
                        for (std::int64_t d = 0; d < Dh; ++d) {
                            gqrow[d] += ds * krow[d];
                            gkrow[d] += ds * qrow[d];
                        }
                    }
                }
            }
        }
    });
}

int Tape::mask_rows(int x, std::vector<double> mask) {
    const Tensor& vx = value(x);
    const std::int64_t C = vx.cols();
    const std::int64_t R = vx.rows();
    if (static_cast<std::int64_t>(mask.size()) != R) throw validation_error("mask_rows: mask length mismatch");
    Tensor out = vx;
    for (std::int64_t r = 0; r < R; ++r) {
        const double m = mask[static_cast<std::size_t>(r)];
        double* row = out.data() + r * C;
        for (std::int64_t j = 0; j < C; ++j) row[j] *= m;
    }
    const int self = static_cast<int>(nodes_.size());
    auto keep = std::make_shared<std::vector<double>>(std::move(mask));
    return push(std::move(out), [self, x, keep, C, R](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        Tensor& gx = t.grad_ref(x);
        for (std::int64_t r = 0; r < R; ++r) {
            const double m = (*keep)[static_cast<std::size_t>(r)];
            if (m == 0.0) continue;
            const double* grow = g.data() + r * C;
            double* gxrow = gx.data() + r * C;
            for (std::int64_t j = 0; j < C; ++j) gxrow[j] += m * grow[j];
        }
    });
}

int Tape::group_mean(int x, std::vector<double> mask, std::int64_t group_len) {
    const Tensor& vx = value(x);
    const std::int64_t C = vx.cols();
    const std::int64_t R = vx.rows();
    if (group_len < 1 || R % group_len != 0) throw validation_error("group_mean: bad group length");
    if (static_cast<std::int64_t>(mask.size()) != R) throw validation_error("group_mean: mask length mismatch");
    const std::int64_t G = R / group_len;

    auto inv_counts = std::make_shared<std::vector<double>>(static_cast<std::size_t>(G), 0.0);
    for (std::int64_t g = 0; g < G; ++g) {
        double cnt = 0.0;
        for (std::int64_t l = 0; l < group_len; ++l) cnt += mask[static_cast<std::size_t>(g * group_len + l)];
        (*inv_counts)[static_cast<std::size_t>(g)] = cnt > 0.0 ? 1.0 / cnt : 0.0;
    }

    Tensor out({G, C});
    for (std::int64_t g = 0; g < G; ++g) {
        double* orow = out.data() + g * C;
        const double inv = (*inv_counts)[static_cast<std::size_t>(g)];
        if (inv == 0.0) continue;
        for (std::int64_t l = 0; l < group_len; ++l) {
            const double m = mask[static_cast<std::size_t>(g * group_len + l)];
            if (m == 0.0) continue;
            const double* row = vx.data() + (g * group_len + l) * C;
            for (std::int64_t j = 0; j < C; ++j) orow[j] += m * inv * row[j];
        }
    }
    const int self = static_cast<int>(nodes_.size());
    auto keep = std::make_shared<std::vector<double>>(std::move(mask));
    return push(std::move(out), [self, x, keep, inv_counts, group_len, G, C](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        Tensor& gx = t.grad_ref(x);
        for (std::int64_t gi = 0; gi < G; ++gi) {
            const double inv = (*inv_counts)[static_cast<std::size_t>(gi)];
            if (inv == 0.0) continue;
            const double* grow = g.data() + gi * C;
            for (std::int64_t l = 0; l < group_len; ++l) {
                const double m = (*keep)[static_cast<std::size_t>(gi * group_len + l)];
                if (m == 0.0) continue;
                double* gxrow = gx.data() + (gi * group_len + l) * C;
                for (std::int64_t j = 0; j < C; ++j) gxrow[j] += m * inv * grow[j];
            }
        }
    });
}

int Tape::stack_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw validation_error("stack_rows: nothing to stack");
    const Tensor& first = value(parts.front());
    if (first.rank() != 2) throw validation_error("stack_rows: parts must be rank-2");
    const std::int64_t S = first.dim(0);
    const std::int64_t C = first.dim(1);
    const std::int64_t B = static_cast<std::int64_t>(parts.size());
    Tensor out({B, S, C});
    for (std::int64_t b = 0; b < B; ++b) {
        const Tensor& p = value(parts[static_cast<std::size_t>(b)]);
        if (!p.same_shape(first)) throw validation_error("stack_rows: inconsistent part shapes");
        const double* src = p.data();
        double* dst = out.data() + b * S * C;
        for (std::int64_t i = 0; i < S * C; ++i) dst[i] = src[i];
    }
    const int self = static_cast<int>(nodes_.size());
    auto keep = std::make_shared<std::vector<int>>(parts);
    return push(std::move(out), [self, keep, S, C](Tape& t) {
        const Tensor& g = t.grad_ref(self);
        for (std::size_t b = 0; b < keep->size(); ++b) {
            Tensor& gp = t.grad_ref((*keep)[b]);
            const double* src = g.data() + static_cast<std::int64_t>(b) * S * C;
            for (std::int64_t i = 0; i < S * C; ++i) gp[i] += src[i];
        }
    });
}

int Tape::cross_entropy_sum(int probs, std::vector<std::int32_t> targets, std::vector<double> weights) {
    const Tensor& p = value(probs);
    const std::int64_t C = p.cols();
    const std::int64_t R = p.rows();
    if (static_cast<std::int64_t>(targets.size()) != R || static_cast<std::int64_t>(weights.size()) != R) {
        throw validation_error("cross_entropy_sum: target/weight length mismatch");
    }
    double loss = 0.0;
    for (std::int64_t r = 0; r < R; ++r) {
        const std::int32_t cls = targets[static_cast<std::size_t>(r)];
        if (cls < 0 || cls >= C) throw validation_error("cross_entropy_sum: target class out of range");
        const double q = p.at(r, cls);
        const double logq = q > 0.0 ? std::max(std::log(q), kLogClamp) : kLogClamp;
        loss -= weights[static_cast<std::size_t>(r)] * logq;
    }
    const int self = static_cast<int>(nodes_.size());
    auto tgt = std::make_shared<std::vector<std::int32_t>>(std::move(targets));
    auto wts = std::make_shared<std::vector<double>>(std::move(weights));
    return push(Tensor::scalar(loss), [self, probs, tgt, wts, C](Tape& t) {
        const double gseed = t.grad_ref(self)[0];
        const Tensor& p = t.value(probs);
        Tensor& gp = t.grad_ref(probs);
        for (std::size_t r = 0; r < tgt->size(); ++r) {
            const std::int32_t cls = (*tgt)[r];
            const double q = p.at(static_cast<std::int64_t>(r), cls);
            if (q > 0.0 && std::log(q) > kLogClamp) {
                gp.at(static_cast<std::int64_t>(r), cls) -= gseed * (*wts)[r] / q;
            }
        }
    });
}

int Tape::weighted_sum(int x, std::vector<double> coeffs) {
    const Tensor& vx = value(x);
    if (static_cast<std::int64_t>(coeffs.size()) != vx.numel()) {
        throw validation_error("weighted_sum: coefficient length mismatch");
    }
    double acc = 0.0;
    for (std::int64_t i = 0; i < vx.numel(); ++i) acc += coeffs[static_cast<std::size_t>(i)] * vx[i];
    const int self = static_cast<int>(nodes_.size());
    auto keep = std::make_shared<std::vector<double>>(std::move(coeffs));
    return push(Tensor::scalar(acc), [self, x, keep](Tape& t) {
        const double g = t.grad_ref(self)[0];
        Tensor& gx = t.grad_ref(x);
        for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g * (*keep)[static_cast<std::size_t>(i)];
    });
}

void Tape::backward(int node) {
    Tensor& seed = grad_ref(node);
    if (seed.numel() != 1) throw validation_error("backward: seed node must be scalar");
    seed[0] = 1.0;
    for (int i = node; i >= 0; --i) {
        auto& n = nodes_[static_cast<std::size_t>(i)];
        if (n.back) n.back(*this);
    }
}

} // namespace tppt
