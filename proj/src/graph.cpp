#include "graph.hpp"

#include <cmath>
#include <cstring>

#include "util.hpp"

namespace fedsab {

namespace {

void add_into(Tensor& dst, const std::vector<double>& src) {
  for (int64_t i = 0; i < dst.size(); ++i) dst[i] += src[static_cast<size_t>(i)];
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Node* Tape::make(Tensor value, std::vector<Node*> parents) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->parents = std::move(parents);
  for (Node* p : node->parents)
    if (p->needs_grad) node->needs_grad = true;
  Node* raw = node.get();
  nodes_.push_back(std::move(node));
  return raw;
}

Node* Tape::leaf(Tensor value, bool needs_grad, std::string tag) {
  Node* n = make(std::move(value), {});
  n->needs_grad = needs_grad;
  n->tag = std::move(tag);
  return n;
}

Node* Tape::conv2d(Node* x, Node* w, Node* b) {
  check(x->value.rank() == 4, ErrorKind::Internal, "conv2d: input must be [B,C,H,W]");
  check(w->value.rank() == 4, ErrorKind::Internal, "conv2d: weight must be [Co,Ci,k,k]");
  const int B = x->value.dim(0), Ci = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int Co = w->value.dim(0), k = w->value.dim(2);
  check(w->value.dim(1) == Ci, ErrorKind::Internal, "conv2d: channel mismatch");
  check(w->value.dim(3) == k && (k % 2) == 1, ErrorKind::Internal, "conv2d: kernel must be odd square");
  check(b->value.rank() == 1 && b->value.dim(0) == Co, ErrorKind::Internal, "conv2d: bad bias shape");
  const int pad = (k - 1) / 2;

  Tensor y({B, Co, H, W});
  {
    std::vector<double> acc(static_cast<size_t>(H) * W);
    const scalar_t* xd = x->value.data();
    const scalar_t* wd = w->value.data();
    const scalar_t* bd = b->value.data();
    scalar_t* yd = y.data();
    for (int bi = 0; bi < B; ++bi) {
      for (int oc = 0; oc < Co; ++oc) {
        std::fill(acc.begin(), acc.end(), static_cast<double>(bd[oc]));
        for (int ic = 0; ic < Ci; ++ic) {
          const scalar_t* xplane = xd + (static_cast<int64_t>(bi) * Ci + ic) * H * W;
          const scalar_t* wk = wd + ((static_cast<int64_t>(oc) * Ci + ic) * k) * k;
          for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
              const double wv = wk[kh * k + kw];
              const int oh_lo = std::max(0, pad - kh), oh_hi = std::min(H, H + pad - kh);
              const int ow_lo = std::max(0, pad - kw), ow_hi = std::min(W, W + pad - kw);
              for (int oh = oh_lo; oh < oh_hi; ++oh) {
                const scalar_t* xrow = xplane + (oh + kh - pad) * W + (kw - pad);
                double* arow = acc.data() + static_cast<size_t>(oh) * W;
                for (int ow = ow_lo; ow < ow_hi; ++ow) arow[ow] += wv * xrow[ow];
              }
            }
          }
        }
        scalar_t* yplane = yd + (static_cast<int64_t>(bi) * Co + oc) * H * W;
        for (int i = 0; i < H * W; ++i) yplane[i] = acc[static_cast<size_t>(i)];
      }
    }
  }

  Node* out = make(std::move(y), {x, w, b});
  out->backward_fn = [x, w, b, B, Ci, Co, H, W, k, pad](Node& self) {
    const scalar_t* gy = self.grad.data();
    const scalar_t* xd = x->value.data();
    const scalar_t* wd = w->value.data();
    const bool need_x = x->needs_grad;
    std::vector<double> dw(static_cast<size_t>(w->value.size()), 0.0);
    std::vector<double> db(static_cast<size_t>(Co), 0.0);
    std::vector<double> dx(need_x ? static_cast<size_t>(x->value.size()) : 0, 0.0);
    for (int bi = 0; bi < B; ++bi) {
      for (int oc = 0; oc < Co; ++oc) {
        const scalar_t* gplane = gy + (static_cast<int64_t>(bi) * Co + oc) * H * W;
        for (int i = 0; i < H * W; ++i) db[static_cast<size_t>(oc)] += gplane[i];
        for (int ic = 0; ic < Ci; ++ic) {
          const scalar_t* xplane = xd + (static_cast<int64_t>(bi) * Ci + ic) * H * W;
          double* dxplane = need_x ? dx.data() + (static_cast<int64_t>(bi) * Ci + ic) * H * W : nullptr;
          const scalar_t* wk = wd + ((static_cast<int64_t>(oc) * Ci + ic) * k) * k;
          double* dwk = dw.data() + ((static_cast<int64_t>(oc) * Ci + ic) * k) * k;
          for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
              const double wv = wk[kh * k + kw];
              double wacc = 0.0;
              const int oh_lo = std::max(0, pad - kh), oh_hi = std::min(H, H + pad - kh);
              const int ow_lo = std::max(0, pad - kw), ow_hi = std::min(W, W + pad - kw);
              for (int oh = oh_lo; oh < oh_hi; ++oh) {
                const int shift = (oh + kh - pad) * W + (kw - pad);
                const scalar_t* xrow = xplane + shift;
                const scalar_t* grow = gplane + static_cast<int64_t>(oh) * W;
                if (need_x) {
                  double* dxrow = dxplane + shift;
                  for (int ow = ow_lo; ow < ow_hi; ++ow) {
                    wacc += grow[ow] * xrow[ow];
                    dxrow[ow] += wv * grow[ow];
                  }
                } else {
                  for (int ow = ow_lo; ow < ow_hi; ++ow)
                    wacc += grow[ow] * xrow[ow];
                }
              }
              dwk[kh * k + kw] += wacc;
            }
          }
        }
      }
    }
    if (w->needs_grad) {
      w->ensure_grad();
      add_into(w->grad, dw);
    }
    if (b->needs_grad) {
      b->ensure_grad();
      add_into(b->grad, db);
    }
    if (need_x) {
      x->ensure_grad();
      add_into(x->grad, dx);
    }
  };
  return out;
}

Node* Tape::dense(Node* x, Node* w, Node* b) {
  check(x->value.rank() == 2, ErrorKind::Internal, "dense: input must be [B,N]");
  const int B = x->value.dim(0), N = x->value.dim(1);
  check(w->value.rank() == 2 && w->value.dim(0) == N, ErrorKind::Internal, "dense: weight mismatch");
  const int M = w->value.dim(1);
  check(b->value.rank() == 1 && b->value.dim(0) == M, ErrorKind::Internal, "dense: bad bias shape");

  Tensor y({B, M});
  for (int bi = 0; bi < B; ++bi) {
    const scalar_t* xrow = x->value.data() + static_cast<int64_t>(bi) * N;
    scalar_t* yrow = y.data() + static_cast<int64_t>(bi) * M;
    for (int m = 0; m < M; ++m) {
      double acc = b->value[m];
      const scalar_t* wcol = w->value.data() + m;
      for (int n = 0; n < N; ++n) acc += xrow[n] * wcol[static_cast<int64_t>(n) * M];
      yrow[m] = acc;
    }
  }

  Node* out = make(std::move(y), {x, w, b});
  out->backward_fn = [x, w, b, B, N, M](Node& self) {
    const scalar_t* gy = self.grad.data();
    std::vector<double> dw(static_cast<size_t>(w->value.size()), 0.0);
    std::vector<double> db(static_cast<size_t>(M), 0.0);
    std::vector<double> dx(x->needs_grad ? static_cast<size_t>(x->value.size()) : 0, 0.0);
    for (int bi = 0; bi < B; ++bi) {
      const scalar_t* grow = gy + static_cast<int64_t>(bi) * M;
      const scalar_t* xrow = x->value.data() + static_cast<int64_t>(bi) * N;
      for (int m = 0; m < M; ++m) db[static_cast<size_t>(m)] += grow[m];
      for (int n = 0; n < N; ++n) {
        const double xv = xrow[n];
        double* dwrow = dw.data() + static_cast<int64_t>(n) * M;
        for (int m = 0; m < M; ++m) dwrow[m] += xv * grow[m];
      }
      if (x->needs_grad) {
        double* dxrow = dx.data() + static_cast<int64_t>(bi) * N;
        for (int n = 0; n < N; ++n) {
          const scalar_t* wrow = w->value.data() + static_cast<int64_t>(n) * M;
          double acc = 0.0;
          for (int m = 0; m < M; ++m) acc += grow[m] * wrow[m];
          dxrow[n] += acc;
        }
      }
    }
    if (w->needs_grad) {
      w->ensure_grad();
      add_into(w->grad, dw);
    }
    if (b->needs_grad) {
      b->ensure_grad();
      add_into(b->grad, db);
    }
    if (x->needs_grad) {
      x->ensure_grad();
      add_into(x->grad, dx);
    }
  };
  return out;
}

Node* Tape::relu(Node* x) {
  Tensor y(x->value.shape());
  uint64_t sig = 0xcbf29ce484222325ULL;
  for (int64_t i = 0; i < y.size(); ++i) {
    const bool active = x->value[i] > 0.0;
    sig = (sig ^ (active ? 1u : 0u)) * 1099511628211ULL;
    y[i] = active ? x->value[i] : 0.0;
  }
  fold_decision(sig);
  Node* out = make(std::move(y), {x});
  out->backward_fn = [x](Node& self) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (int64_t i = 0; i < self.grad.size(); ++i)
      if (x->value[i] > 0.0) x->grad[i] += self.grad[i];
  };
  return out;
}

Node* Tape::sigmoid(Node* x) {
  Tensor y(x->value.shape());
  for (int64_t i = 0; i < y.size(); ++i)
    y[i] = stable_sigmoid(x->value[i]);
  Node* out = make(std::move(y), {x});
  out->backward_fn = [x](Node& self) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (int64_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.value[i];
      x->grad[i] += self.grad[i] * s * (1.0 - s);
    }
  };
  return out;
}

Node* Tape::maxpool2(Node* x) {
  check(x->value.rank() == 4, ErrorKind::Internal, "maxpool2: input must be [B,C,H,W]");
  const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  check(H >= 2 && W >= 2, ErrorKind::Internal, "maxpool2: spatial dims too small");
  const int Ho = H / 2, Wo = W / 2;
  Tensor y({B, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(y.size()));
  uint64_t sig = 0xcbf29ce484222325ULL;
  int64_t oi = 0;
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c) {
      const scalar_t* plane = x->value.data() + (static_cast<int64_t>(bi) * C + c) * H * W;
      const int64_t base = (static_cast<int64_t>(bi) * C + c) * H * W;
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow, ++oi) {
          // first occurrence wins on ties: scan order (0,0),(0,1),(1,0),(1,1)
          const int64_t first = static_cast<int64_t>(2 * oh) * W + 2 * ow;
          int64_t best = first;
          scalar_t bv = plane[best];
          const int64_t cand[3] = {first + 1, first + W, first + W + 1};
          for (int64_t ci : cand)
            if (plane[ci] > bv) {
              bv = plane[ci];
              best = ci;
            }
          y[oi] = bv;
          (*argmax)[static_cast<size_t>(oi)] = base + best;
          sig = (sig ^ static_cast<uint64_t>(best - first)) * 1099511628211ULL;
        }
    }
  fold_decision(sig);
  Node* out = make(std::move(y), {x});
  out->backward_fn = [x, argmax](Node& self) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (int64_t i = 0; i < self.grad.size(); ++i)
      x->grad[(*argmax)[static_cast<size_t>(i)]] += self.grad[i];
  };
  return out;
}

Node* Tape::avgpool2(Node* x) {
  check(x->value.rank() == 4, ErrorKind::Internal, "avgpool2: input must be [B,C,H,W]");
  const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  check(H >= 2 && W >= 2, ErrorKind::Internal, "avgpool2: spatial dims too small");
  const int Ho = H / 2, Wo = W / 2;
  Tensor y({B, C, Ho, Wo});
  int64_t oi = 0;
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c) {
      const scalar_t* plane = x->value.data() + (static_cast<int64_t>(bi) * C + c) * H * W;
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow, ++oi) {
          const int64_t p = static_cast<int64_t>(2 * oh) * W + 2 * ow;
          y[oi] = (plane[p] + plane[p + 1] + plane[p + W] + plane[p + W + 1]) * 0.25;
        }
    }
  Node* out = make(std::move(y), {x});
  out->backward_fn = [x, B, C, H, W, Ho, Wo](Node& self) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    int64_t oi = 0;
    for (int bi = 0; bi < B; ++bi)
      for (int c = 0; c < C; ++c) {
        scalar_t* plane = x->grad.data() + (static_cast<int64_t>(bi) * C + c) * H * W;
        for (int oh = 0; oh < Ho; ++oh)
          for (int ow = 0; ow < Wo; ++ow, ++oi) {
            const scalar_t g = self.grad[oi] * 0.25;
            const int64_t p = static_cast<int64_t>(2 * oh) * W + 2 * ow;
            plane[p] += g;
            plane[p + 1] += g;
            plane[p + W] += g;
            plane[p + W + 1] += g;
          }
      }
  };
  return out;
}

Node* Tape::upsample2_nearest(Node* x) {
  check(x->value.rank() == 4, ErrorKind::Internal, "upsample2: input must be [B,C,H,W]");
  const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  Tensor y({B, C, 2 * H, 2 * W});
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c) {
      const scalar_t* xp = x->value.data() + (static_cast<int64_t>(bi) * C + c) * H * W;
      scalar_t* yp = y.data() + (static_cast<int64_t>(bi) * C + c) * 4 * H * W;
      for (int i = 0; i < 2 * H; ++i)
        for (int j = 0; j < 2 * W; ++j) yp[static_cast<int64_t>(i) * 2 * W + j] = xp[(i / 2) * W + j / 2];
    }
  Node* out = make(std::move(y), {x});
  out->backward_fn = [x, B, C, H, W](Node& self) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (int bi = 0; bi < B; ++bi)
      for (int c = 0; c < C; ++c) {
        scalar_t* xg = x->grad.data() + (static_cast<int64_t>(bi) * C + c) * H * W;
        const scalar_t* gp = self.grad.data() + (static_cast<int64_t>(bi) * C + c) * 4 * H * W;
        for (int i = 0; i < 2 * H; ++i)
          for (int j = 0; j < 2 * W; ++j) xg[(i / 2) * W + j / 2] += gp[static_cast<int64_t>(i) * 2 * W + j];
      }
  };
  return out;
}

Node* Tape::concat_channels(Node* a, Node* b) {
  check(a->value.rank() == 4 && b->value.rank() == 4, ErrorKind::Internal, "concat: inputs must be [B,C,H,W]");
  const int B = a->value.dim(0), Ca = a->value.dim(1), H = a->value.dim(2), W = a->value.dim(3);
  const int Cb = b->value.dim(1);
  check(b->value.dim(0) == B && b->value.dim(2) == H && b->value.dim(3) == W, ErrorKind::Internal,
        "concat: spatial/batch mismatch");
  Tensor y({B, Ca + Cb, H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int bi = 0; bi < B; ++bi) {
    std::memcpy(y.data() + static_cast<int64_t>(bi) * (Ca + Cb) * plane,
                a->value.data() + static_cast<int64_t>(bi) * Ca * plane,
                static_cast<size_t>(Ca * plane) * sizeof(scalar_t));
    std::memcpy(y.data() + (static_cast<int64_t>(bi) * (Ca + Cb) + Ca) * plane,
                b->value.data() + static_cast<int64_t>(bi) * Cb * plane,
                static_cast<size_t>(Cb * plane) * sizeof(scalar_t));
  }
  Node* out = make(std::move(y), {a, b});
  out->backward_fn = [a, b, B, Ca, Cb, plane](Node& self) {
    if (a->needs_grad) {
      a->ensure_grad();
      for (int bi = 0; bi < B; ++bi) {
        const scalar_t* g = self.grad.data() + static_cast<int64_t>(bi) * (Ca + Cb) * plane;
        scalar_t* ag = a->grad.data() + static_cast<int64_t>(bi) * Ca * plane;
        for (int64_t i = 0; i < Ca * plane; ++i) ag[i] += g[i];
      }
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (int bi = 0; bi < B; ++bi) {
        const scalar_t* g = self.grad.data() + (static_cast<int64_t>(bi) * (Ca + Cb) + Ca) * plane;
        scalar_t* bg = b->grad.data() + static_cast<int64_t>(bi) * Cb * plane;
        for (int64_t i = 0; i < Cb * plane; ++i) bg[i] += g[i];
      }
    }
  };
  return out;
}

Node* Tape::global_avgpool(Node* x) {
  check(x->value.rank() == 4, ErrorKind::Internal, "global_avgpool: input must be [B,C,H,W]");
  const int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor y({B, C});
  for (int bi = 0; bi < B; ++bi)
    for (int c = 0; c < C; ++c) {
      const scalar_t* xp = x->value.data() + (static_cast<int64_t>(bi) * C + c) * plane;
      double acc = 0.0;
      for (int64_t i = 0; i < plane; ++i) acc += xp[i];
      y[static_cast<int64_t>(bi) * C + c] = acc / static_cast<double>(plane);
    }
  Node* out = make(std::move(y), {x});
  out->backward_fn = [x, B, C, plane](Node& self) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (int bi = 0; bi < B; ++bi)
      for (int c = 0; c < C; ++c) {
        const scalar_t g = self.grad[static_cast<int64_t>(bi) * C + c] / static_cast<scalar_t>(plane);
        scalar_t* xg = x->grad.data() + (static_cast<int64_t>(bi) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) xg[i] += g;
      }
  };
  return out;
}

Node* Tape::flatten(Node* x) {
  check(x->value.rank() >= 2, ErrorKind::Internal, "flatten: rank must be >= 2");
  const int B = x->value.dim(0);
  const int64_t rest = x->value.size() / B;
  return reshape(x, {B, static_cast<int>(rest)});
}

Node* Tape::reshape(Node* x, std::vector<int> shape) {
  Tensor y(std::move(shape));
  check(y.size() == x->value.size(), ErrorKind::Internal, "reshape: size mismatch");
  std::memcpy(y.data(), x->value.data(), static_cast<size_t>(y.size()) * sizeof(scalar_t));
  Node* out = make(std::move(y), {x});
  out->backward_fn = [x](Node& self) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (int64_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
  };
  return out;
}

Node* Tape::add(Node* a, Node* b) {
  check(a->value.same_shape(b->value), ErrorKind::Internal, "add: shape mismatch");
  Tensor y(a->value.shape());
  for (int64_t i = 0; i < y.size(); ++i) y[i] = a->value[i] + b->value[i];
  Node* out = make(std::move(y), {a, b});
  out->backward_fn = [a, b](Node& self) {
    if (a->needs_grad) {
      a->ensure_grad();
      for (int64_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i];
    }
  };
  return out;
}

Node* Tape::scale(Node* a, double s) {
  Tensor y(a->value.shape());
  for (int64_t i = 0; i < y.size(); ++i) y[i] = s * a->value[i];
  Node* out = make(std::move(y), {a});
  out->scalar64 = a->value.size() == 1 ? s * a->scalar64 : 0.0;
  out->backward_fn = [a, s](Node& self) {
    if (!a->needs_grad) return;
    a->ensure_grad();
    for (int64_t i = 0; i < self.grad.size(); ++i) a->grad[i] += s * self.grad[i];
  };
  return out;
}

Node* Tape::mean_all(Node* x) {
  const int64_t n = x->value.size();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += x->value[i];
  const double mean = acc / static_cast<double>(n);
  Node* out = make(Tensor::scalar(mean), {x});
  out->scalar64 = mean;
  out->backward_fn = [x, n](Node& self) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    const scalar_t g = self.grad[0] / static_cast<scalar_t>(n);
    for (int64_t i = 0; i < n; ++i) x->grad[i] += g;
  };
  return out;
}

Node* Tape::mse(Node* pred, Node* target) {
  check(pred->value.same_shape(target->value), ErrorKind::Input, "mse: shape mismatch");
  const int64_t n = pred->value.size();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = pred->value[i] - target->value[i];
    acc += d * d;
  }
  const double loss = acc / static_cast<double>(n);
  Node* out = make(Tensor::scalar(loss), {pred, target});
  out->scalar64 = loss;
  out->backward_fn = [pred, target, n](Node& self) {
    const double g = 2.0 * self.grad[0] / static_cast<double>(n);
    if (pred->needs_grad) {
      pred->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        pred->grad[i] += g * (pred->value[i] - target->value[i]);
    }
    if (target->needs_grad) {
      target->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        target->grad[i] -= g * (pred->value[i] - target->value[i]);
    }
  };
  return out;
}

Node* Tape::bce_with_logits(Node* logits, const std::vector<scalar_t>& targets) {
  const int64_t n = logits->value.size();
  check(static_cast<int64_t>(targets.size()) == n, ErrorKind::Input, "bce: target length mismatch");
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double z = logits->value[i], t = targets[static_cast<size_t>(i)];
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  const double loss = acc / static_cast<double>(n);
  Node* out = make(Tensor::scalar(loss), {logits});
  out->scalar64 = loss;
  auto tcopy = std::make_shared<std::vector<scalar_t>>(targets);
  out->backward_fn = [logits, tcopy, n](Node& self) {
    if (!logits->needs_grad) return;
    logits->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      const double s = stable_sigmoid(logits->value[i]);
      logits->grad[i] += g * (s - (*tcopy)[static_cast<size_t>(i)]);
    }
  };
  return out;
}

Node* Tape::softmax_cross_entropy(Node* logits, const std::vector<int>& labels, int num_classes) {
  check(logits->value.rank() == 2, ErrorKind::Internal, "softmax_ce: logits must be [B,K]");
  const int B = logits->value.dim(0), K = logits->value.dim(1);
  check(K == num_classes, ErrorKind::Internal, "softmax_ce: class count mismatch");
  check(static_cast<int>(labels.size()) == B, ErrorKind::Input, "softmax_ce: label count mismatch");
  for (int i = 0; i < B; ++i)
    check(labels[static_cast<size_t>(i)] >= 0 && labels[static_cast<size_t>(i)] < K, ErrorKind::Input,
          "label out of range: " + std::to_string(labels[static_cast<size_t>(i)]));

  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(B) * K);
  double acc = 0.0;
  for (int bi = 0; bi < B; ++bi) {
    const scalar_t* row = logits->value.data() + static_cast<int64_t>(bi) * K;
    double mx = row[0];
    for (int k2 = 1; k2 < K; ++k2) mx = std::max(mx, row[k2]);
    double denom = 0.0;
    for (int k2 = 0; k2 < K; ++k2) denom += std::exp(row[k2] - mx);
    const double logdenom = std::log(denom);
    for (int k2 = 0; k2 < K; ++k2)
      (*probs)[static_cast<size_t>(bi) * K + k2] = std::exp(row[k2] - mx) / denom;
    acc += -(row[labels[static_cast<size_t>(bi)]] - mx - logdenom);
  }
  const double loss = acc / static_cast<double>(B);
  Node* out = make(Tensor::scalar(loss), {logits});
  out->scalar64 = loss;
  auto lcopy = std::make_shared<std::vector<int>>(labels);
  out->backward_fn = [logits, probs, lcopy, B, K](Node& self) {
    if (!logits->needs_grad) return;
    logits->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(B);
    for (int bi = 0; bi < B; ++bi)
      for (int k2 = 0; k2 < K; ++k2) {
        const double onehot = (k2 == (*lcopy)[static_cast<size_t>(bi)]) ? 1.0 : 0.0;
        logits->grad[static_cast<int64_t>(bi) * K + k2] +=
            g * ((*probs)[static_cast<size_t>(bi) * K + k2] - onehot);
      }
  };
  return out;
}

Node* Tape::weighted_sum(const std::vector<std::pair<Node*, double>>& terms) {
  check(!terms.empty(), ErrorKind::Internal, "weighted_sum: no terms");
  double acc = 0.0;
  std::vector<Node*> parents;
  for (const auto& [node, c] : terms) {
    check(node->value.size() == 1, ErrorKind::Internal, "weighted_sum: terms must be scalars");
    acc += c * node->scalar64;
    parents.push_back(node);
  }
  Node* out = make(Tensor::scalar(acc), parents);
  out->scalar64 = acc;
  auto coeffs = std::make_shared<std::vector<std::pair<Node*, double>>>(terms);
  out->backward_fn = [coeffs](Node& self) {
    for (auto& [node, c] : *coeffs) {
      if (!node->needs_grad) continue;
      node->ensure_grad();
      node->grad[0] += c * self.grad[0];
    }
  };
  return out;
}

void Tape::backward(Node* output, const Tensor* seed) {
  check(!consumed_, ErrorKind::Usage, "tape already consumed: backward may run once");
  consumed_ = true;
  output->ensure_grad();
  if (seed) {
    check(seed->same_shape(output->value), ErrorKind::Input, "backward: seed shape mismatch");
    for (int64_t i = 0; i < seed->size(); ++i) output->grad[i] = (*seed)[i];
  } else {
    check(output->value.size() == 1, ErrorKind::Usage, "backward without seed requires a scalar output");
    output->grad[0] = 1.0;
  }
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* n = it->get();
    if (n->has_grad && n->needs_grad && n->backward_fn) n->backward_fn(*n);
  }
}

void Tape::apply_gradients(ParamSet& params, double lr) const {
  for (const auto& node : nodes_) {
    if (node->tag.empty() || !node->has_grad || !node->parents.empty()) continue;
    if (!params.has(node->tag)) continue;
    Tensor& p = params.get(node->tag);
    check(p.same_shape(node->grad), ErrorKind::Internal, "apply_gradients: shape drift for " + node->tag);
    for (int64_t i = 0; i < p.size(); ++i) p[i] -= lr * node->grad[i];
  }
}

ParamSet Tape::collect_gradients(const ParamSet& params) const {
  ParamSet grads = params.clone_zeroed();
  for (const auto& node : nodes_) {
    if (node->tag.empty() || !node->has_grad || !node->parents.empty()) continue;
    if (!grads.has(node->tag)) continue;
    Tensor& g = grads.get(node->tag);
    check(g.same_shape(node->grad), ErrorKind::Internal, "collect_gradients: shape drift for " + node->tag);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += node->grad[i];
  }
  return grads;
}

}  // namespace fedsab
