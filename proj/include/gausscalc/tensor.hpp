#ifndef GAUSSCALC_TENSOR_HPP
#define GAUSSCALC_TENSOR_HPP

/**
 * @file tensor.hpp
 * @brief Symmetric tensors stored over nondecreasing multi-indices, and
 *        symmetric tensors kept as weighted sums of rank-one powers.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "gausscalc/firstchaos.hpp"

namespace gausscalc {

/// Neumaier compensated sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// k! as an exact integer for k <= 20, Gamma(k+1) beyond.
inline double factorial(int k) {
    static const std::array<std::uint64_t, 21> table = [] {
        std::array<std::uint64_t, 21> t{};
        t[0] = 1;
        for (std::uint64_t i = 1; i < 21; ++i) {
            t[i] = t[i - 1] * i;
        }
        return t;
    }();
    if (k < 0) {
        throw ParameterError("factorial of a negative number");
    }
    if (k <= 20) {
        return static_cast<double>(table[static_cast<std::size_t>(k)]);
    }
    return std::tgamma(static_cast<double>(k) + 1.0);
}

inline double binomial(int k, int n) {
    if (n < 0 || n > k) {
        return 0.0;
    }
    n = std::min(n, k - n);
    double b = 1.0;
    for (int i = 1; i <= n; ++i) {
        b = b * static_cast<double>(k - n + i) / static_cast<double>(i);
    }
    return std::round(b);
}

/// Upper bound on stored entries of a single symmetric tensor.
inline constexpr std::size_t kMaxTensorEntries = std::size_t{1} << 22;

/**
 * Lexicographic enumeration of nondecreasing index sequences of length k
 * over {0, ..., N-1}, with orbit sizes k! / prod(m_i!).
 */
class MultisetIndex {
public:
    MultisetIndex(int dim, int order) : dim_(dim), order_(order) {
        if (dim < 1 || order < 0) {
            throw ShapeError("tensor dimension must be positive and order nonnegative");
        }
        const double c = binomial(dim + order - 1, order);
        if (c > static_cast<double>(kMaxTensorEntries)) {
            throw ShapeError("symmetric tensor too large: C(N+k-1,k) exceeds the size guard");
        }
        count_ = static_cast<std::size_t>(c);
        // pre_[rem][v] = number of sequences of length rem, values >= u, summed over u < v
        pre_.assign(static_cast<std::size_t>(order + 1), std::vector<std::size_t>(dim + 1, 0));
        for (int rem = 0; rem <= order; ++rem) {
            for (int v = 0; v < dim; ++v) {
                const auto cnt = static_cast<std::size_t>(binomial(dim - v + rem - 1, rem));
                pre_[rem][v + 1] = pre_[rem][v] + cnt;
            }
        }
        elems_.resize(count_ * static_cast<std::size_t>(order));
        mult_.resize(count_);
        std::vector<int> cur(static_cast<std::size_t>(order), 0);
        for (std::size_t r = 0; r < count_; ++r) {
            std::copy(cur.begin(), cur.end(), elems_.begin() + static_cast<std::ptrdiff_t>(r * order));
            double m = factorial(order);
            int run = 1;
            for (int l = 1; l <= order; ++l) {
                if (l < order && cur[l] == cur[l - 1]) {
                    ++run;
                } else {
                    m /= factorial(run);
                    run = 1;
                }
            }
            mult_[r] = order == 0 ? 1.0 : m;
            // advance to the next nondecreasing sequence
            int p = order - 1;
            while (p >= 0 && cur[p] == dim - 1) {
                --p;
            }
            if (p < 0) {
                break;
            }
            const int v = cur[p] + 1;
            for (int l = p; l < order; ++l) {
                cur[l] = v;
            }
        }
    }

    int dim() const { return dim_; }
    int order() const { return order_; }
    std::size_t size() const { return count_; }
    double multiplicity(std::size_t r) const { return mult_[r]; }

    std::span<const int> at(std::size_t r) const {
        return {elems_.data() + r * static_cast<std::size_t>(order_),
                static_cast<std::size_t>(order_)};
    }

    /// Rank of a nondecreasing sequence of length order().
    std::size_t rank(std::span<const int> seq) const {
        std::size_t r = 0;
        int prev = 0;
        for (int l = 0; l < order_; ++l) {
            const int x = seq[static_cast<std::size_t>(l)];
            const auto& p = pre_[static_cast<std::size_t>(order_ - l - 1)];
            r += p[x] - p[prev];
            prev = x;
        }
        return r;
    }

private:
    int dim_;
    int order_;
    std::size_t count_ = 0;
    std::vector<std::vector<std::size_t>> pre_;
    std::vector<int> elems_;
    std::vector<double> mult_;
};

/// Shared, immutable index tables keyed by (N, k).
inline const MultisetIndex& multiset_index(int dim, int order) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::unique_ptr<MultisetIndex>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{dim, order}];
    if (!slot) {
        slot = std::make_unique<MultisetIndex>(dim, order);
    }
    return *slot;
}

namespace detail {

// Sorted insertion of b into seq, then rank in idx (of order seq.size()+1).
inline std::size_t insert_rank(const MultisetIndex& idx, std::span<const int> seq, int b,
                               int* buf) {
    std::size_t o = 0;
    bool placed = false;
    for (int v : seq) {
        if (!placed && b <= v) {
            buf[o++] = b;
            placed = true;
        }
        buf[o++] = v;
    }
    if (!placed) {
        buf[o++] = b;
    }
    return idx.rank({buf, o});
}

// Rank of seq with position p removed.
inline std::size_t drop_rank(const MultisetIndex& idx, std::span<const int> seq, std::size_t p,
                             int* buf) {
    std::size_t o = 0;
    for (std::size_t l = 0; l < seq.size(); ++l) {
        if (l != p) {
            buf[o++] = seq[l];
        }
    }
    return idx.rank({buf, o});
}

}  // namespace detail

/// Symmetric element of the k-fold tensor power of R^N in the increment basis.
class SymmetricTensor {
public:
    SymmetricTensor() : SymmetricTensor(1, 0) {}

    SymmetricTensor(int dim, int order)
        : idx_(&multiset_index(dim, order)), data_(idx_->size(), 0.0) {}

    static SymmetricTensor scalar(int dim, double v) {
        SymmetricTensor t(dim, 0);
        t.data_[0] = v;
        return t;
    }

    /// w * a^{tensor k}.
    static SymmetricTensor rank_one(const Vector& a, int order, double w = 1.0) {
        SymmetricTensor t(static_cast<int>(a.size()), order);
        for (std::size_t r = 0; r < t.size(); ++r) {
            double p = w;
            for (int i : t.idx_->at(r)) {
                p *= a(i);
            }
            t.data_[r] = p;
        }
        return t;
    }

    int dim() const { return idx_->dim(); }
    int order() const { return idx_->order(); }
    std::size_t size() const { return data_.size(); }
    const MultisetIndex& index() const { return *idx_; }
    std::span<const int> multi_index(std::size_t r) const { return idx_->at(r); }
    double multiplicity(std::size_t r) const { return idx_->multiplicity(r); }

    double& operator[](std::size_t r) { return data_[r]; }
    double operator[](std::size_t r) const { return data_[r]; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    /// Entry at an arbitrary (not necessarily sorted) index tuple.
    double& at(std::vector<int> ix) {
        std::sort(ix.begin(), ix.end());
        return data_[idx_->rank(ix)];
    }
    double at(std::vector<int> ix) const {
        std::sort(ix.begin(), ix.end());
        return data_[idx_->rank(ix)];
    }

    SymmetricTensor& operator+=(const SymmetricTensor& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += o.data_[i];
        }
        return *this;
    }
    SymmetricTensor& operator-=(const SymmetricTensor& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] -= o.data_[i];
        }
        return *this;
    }
    SymmetricTensor& operator*=(double s) {
        for (double& v : data_) {
            v *= s;
        }
        return *this;
    }

    void check_same(const SymmetricTensor& o) const {
        if (o.dim() != dim() || o.order() != order()) {
            throw ShapeError("tensor order or dimension mismatch");
        }
    }

private:
    const MultisetIndex* idx_;
    std::vector<double> data_;
};

inline SymmetricTensor operator+(SymmetricTensor a, const SymmetricTensor& b) { return a += b; }
inline SymmetricTensor operator-(SymmetricTensor a, const SymmetricTensor& b) { return a -= b; }
inline SymmetricTensor operator*(SymmetricTensor a, double s) { return a *= s; }
inline SymmetricTensor operator*(double s, SymmetricTensor a) { return a *= s; }

/// Plain Euclidean pairing of the full tensors.
inline double euclid_inner(const SymmetricTensor& a, const SymmetricTensor& b) {
    a.check_same(b);
    CompensatedSum s;
    for (std::size_t r = 0; r < a.size(); ++r) {
        s.add(a.multiplicity(r) * a[r] * b[r]);
    }
    return s.value();
}

inline double max_abs(const SymmetricTensor& a) {
    double m = 0.0;
    for (double v : a.data()) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

/// <A, y^{tensor k}> in the Euclidean pairing.
inline double full_contract(const SymmetricTensor& a, const Vector& y) {
    if (static_cast<int>(y.size()) != a.dim()) {
        throw ShapeError("contraction vector length mismatch");
    }
    CompensatedSum s;
    for (std::size_t r = 0; r < a.size(); ++r) {
        double p = a.multiplicity(r) * a[r];
        for (int i : a.multi_index(r)) {
            p *= y(i);
        }
        s.add(p);
    }
    return s.value();
}

/// Contracts one axis with w (Euclidean), giving order k-1.
inline SymmetricTensor contract(const SymmetricTensor& a, const Vector& w) {
    if (a.order() == 0) {
        throw ShapeError("cannot contract an order-0 tensor");
    }
    if (static_cast<int>(w.size()) != a.dim()) {
        throw ShapeError("contraction vector length mismatch");
    }
    SymmetricTensor out(a.dim(), a.order() - 1);
    std::vector<int> buf(static_cast<std::size_t>(a.order()));
    for (std::size_t r = 0; r < out.size(); ++r) {
        const auto beta = out.multi_index(r);
        double s = 0.0;
        for (int j = 0; j < a.dim(); ++j) {
            if (w(j) != 0.0) {
                s += a[detail::insert_rank(a.index(), beta, j, buf.data())] * w(j);
            }
        }
        out[r] = s;
    }
    return out;
}

/// Contracts two axes against the matrix M, giving order k-2.
inline SymmetricTensor trace_contract(const SymmetricTensor& a, const Matrix& M) {
    if (a.order() < 2) {
        throw ShapeError("trace contraction needs order >= 2");
    }
    const int n = a.dim();
    SymmetricTensor mid(n, a.order() - 1);
    SymmetricTensor out(n, a.order() - 2);
    std::vector<int> buf(static_cast<std::size_t>(a.order()));
    std::vector<int> buf2(static_cast<std::size_t>(a.order()));
    for (std::size_t r = 0; r < out.size(); ++r) {
        const auto beta = out.multi_index(r);
        double s = 0.0;
        for (int x = 0; x < n; ++x) {
            const std::size_t rb = detail::insert_rank(mid.index(), beta, x, buf.data());
            const auto bx = mid.multi_index(rb);
            for (int y = 0; y < n; ++y) {
                const double m = M(x, y);
                if (m != 0.0) {
                    s += m * a[detail::insert_rank(a.index(), bx, y, buf2.data())];
                }
            }
        }
        out[r] = s;
    }
    return out;
}

/// Zeroes every entry whose multi-index reaches coordinate m or beyond.
inline SymmetricTensor project(const SymmetricTensor& a, std::size_t m) {
    SymmetricTensor out = a;
    if (a.order() == 0) {
        return out;
    }
    for (std::size_t r = 0; r < out.size(); ++r) {
        if (static_cast<std::size_t>(out.multi_index(r).back()) >= m) {
            out[r] = 0.0;
        }
    }
    return out;
}

/// Largest entry with some index >= m.
inline double mass_beyond(const SymmetricTensor& a, std::size_t m) {
    double mx = 0.0;
    if (a.order() == 0) {
        return 0.0;
    }
    for (std::size_t r = 0; r < a.size(); ++r) {
        if (static_cast<std::size_t>(a.multi_index(r).back()) >= m) {
            mx = std::max(mx, std::abs(a[r]));
        }
    }
    return mx;
}

/**
 * M applied on every axis. Axes are transformed one at a time; after j steps
 * the intermediate is symmetric within the j transformed axes and within the
 * remaining ones, so it is stored as a product of two multiset ranks.
 */
inline SymmetricTensor transform(const SymmetricTensor& a, const Matrix& M) {
    const int n = a.dim();
    const int k = a.order();
    if (M.rows() != n || M.cols() != n) {
        throw ShapeError("transform matrix size mismatch");
    }
    if (k == 0) {
        return a;
    }
    std::vector<double> cur = a.data();
    std::vector<int> buf(static_cast<std::size_t>(k) + 1);
    for (int j = 0; j < k; ++j) {
        const MultisetIndex& in1 = multiset_index(n, j);
        const MultisetIndex& in2 = multiset_index(n, k - j);
        const MultisetIndex& out1 = multiset_index(n, j + 1);
        const MultisetIndex& out2 = multiset_index(n, k - j - 1);
        if (static_cast<double>(out1.size()) * static_cast<double>(out2.size()) >
            static_cast<double>(kMaxTensorEntries) * 8.0) {
            throw ShapeError("tensor transform intermediate exceeds the size guard");
        }
        std::vector<std::size_t> ins(out2.size() * static_cast<std::size_t>(n));
        for (std::size_t b = 0; b < out2.size(); ++b) {
            for (int x = 0; x < n; ++x) {
                ins[b * n + x] = detail::insert_rank(in2, out2.at(b), x, buf.data());
            }
        }
        std::vector<double> next(out1.size() * out2.size(), 0.0);
        for (std::size_t g = 0; g < out1.size(); ++g) {
            const auto gam = out1.at(g);
            const int av = gam.back();
            const std::size_t ar =
                detail::drop_rank(in1, gam, static_cast<std::size_t>(j), buf.data());
            const double* src = cur.data() + ar * in2.size();
            double* dst = next.data() + g * out2.size();
            for (std::size_t b = 0; b < out2.size(); ++b) {
                const std::size_t* ib = ins.data() + b * n;
                double s = 0.0;
                for (int x = 0; x < n; ++x) {
                    s += M(av, x) * src[ib[x]];
                }
                dst[b] = s;
            }
        }
        cur.swap(next);
    }
    SymmetricTensor out(n, k);
    out.data() = std::move(cur);
    return out;
}

/// <A, B> with every axis paired through the Gram matrix.
inline double inner(const GramContext& ctx, const SymmetricTensor& a, const SymmetricTensor& b) {
    a.check_same(b);
    if (static_cast<std::size_t>(a.dim()) != ctx.size()) {
        throw ShapeError("tensor dimension does not match the grid");
    }
    return euclid_inner(a, transform(b, ctx.gram()));
}

/// sym(f (x) g^{tensor (n-1)}).
inline SymmetricTensor sym_linear_power(const Vector& f, const Vector& g, int n) {
    if (n < 1) {
        throw ShapeError("order must be at least 1");
    }
    SymmetricTensor t(static_cast<int>(f.size()), n);
    for (std::size_t r = 0; r < t.size(); ++r) {
        const auto ix = t.multi_index(r);
        double s = 0.0;
        for (std::size_t p = 0; p < ix.size(); ++p) {
            double prod = f(ix[p]);
            for (std::size_t l = 0; l < ix.size(); ++l) {
                if (l != p) {
                    prod *= g(ix[l]);
                }
            }
            s += prod;
        }
        t[r] = s / static_cast<double>(n);
    }
    return t;
}

/**
 * Symmetrization of an order-(k+1) tensor given as one order-k tensor per
 * value of its last axis: plain average over the k+1 insertion positions.
 */
inline SymmetricTensor symmetrize_slots(const std::vector<SymmetricTensor>& slots) {
    if (slots.empty()) {
        throw ShapeError("no slots");
    }
    const int n = slots.front().dim();
    const int k = slots.front().order();
    if (static_cast<int>(slots.size()) != n) {
        throw ShapeError("slot count must equal the dimension");
    }
    SymmetricTensor out(n, k + 1);
    std::vector<int> buf(static_cast<std::size_t>(k) + 1);
    const MultisetIndex& lower = multiset_index(n, k);
    for (std::size_t r = 0; r < out.size(); ++r) {
        const auto gam = out.multi_index(r);
        double s = 0.0;
        for (std::size_t p = 0; p < gam.size(); ++p) {
            s += slots[static_cast<std::size_t>(gam[p])][detail::drop_rank(lower, gam, p, buf.data())];
        }
        out[r] = s / static_cast<double>(k + 1);
    }
    return out;
}

/**
 * Symmetric tensor kept as sum_j w_j a_j^{tensor k}. Used where orders are
 * too high for dense storage and the coefficients are known in this form.
 */
class RankOneTensor {
public:
    RankOneTensor(int dim, int order) : dim_(dim), order_(order) {}

    RankOneTensor(const Vector& a, int order, double w = 1.0)
        : dim_(static_cast<int>(a.size())), order_(order) {
        terms_.push_back({w, a});
    }

    int dim() const { return dim_; }
    int order() const { return order_; }
    const std::vector<std::pair<double, Vector>>& terms() const { return terms_; }

    RankOneTensor& operator+=(const RankOneTensor& o) {
        if (o.dim_ != dim_ || o.order_ != order_) {
            throw ShapeError("tensor order or dimension mismatch");
        }
        for (const auto& t : o.terms_) {
            add_term(t.first, t.second);
        }
        return *this;
    }
    RankOneTensor& operator*=(double s) {
        for (auto& t : terms_) {
            t.first *= s;
        }
        return *this;
    }

    void add_term(double w, const Vector& a) {
        for (auto& t : terms_) {
            if (t.second.size() == a.size() && t.second == a) {
                t.first += w;
                return;
            }
        }
        terms_.push_back({w, a});
    }

    SymmetricTensor to_dense() const {
        SymmetricTensor t(dim_, order_);
        for (const auto& [w, a] : terms_) {
            t += SymmetricTensor::rank_one(a, order_, w);
        }
        return t;
    }

private:
    int dim_;
    int order_;
    std::vector<std::pair<double, Vector>> terms_;
};

inline RankOneTensor operator+(RankOneTensor a, const RankOneTensor& b) { return a += b; }
inline RankOneTensor operator*(RankOneTensor a, double s) { return a *= s; }
inline RankOneTensor operator*(double s, RankOneTensor a) { return a *= s; }

inline double inner(const GramContext& ctx, const RankOneTensor& a, const RankOneTensor& b) {
    if (a.dim() != b.dim() || a.order() != b.order()) {
        throw ShapeError("tensor order or dimension mismatch");
    }
    CompensatedSum s;
    for (const auto& [wa, va] : a.terms()) {
        const Vector gv = ctx.gram() * va;
        for (const auto& [wb, vb] : b.terms()) {
            s.add(wa * wb * std::pow(gv.dot(vb), a.order()));
        }
    }
    return s.value();
}

inline RankOneTensor contract(const RankOneTensor& a, const Vector& w) {
    if (a.order() == 0) {
        throw ShapeError("cannot contract an order-0 tensor");
    }
    RankOneTensor out(a.dim(), a.order() - 1);
    for (const auto& [c, v] : a.terms()) {
        out.add_term(c * v.dot(w), v);
    }
    return out;
}

inline RankOneTensor project(const RankOneTensor& a, std::size_t m) {
    RankOneTensor out(a.dim(), a.order());
    for (const auto& [c, v] : a.terms()) {
        out.add_term(c, project_past(v, m));
    }
    return out;
}

}  // namespace gausscalc

#endif  // GAUSSCALC_TENSOR_HPP
