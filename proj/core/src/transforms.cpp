#include "tsgen/transforms.hpp"

#include <algorithm>
#include <cmath>

#include "tsgen/errors.hpp"

namespace tsgen {

TransformKind transform_kind_from_str(const std::string& s) {
    if (s == "delay") return TransformKind::kDelay;
    if (s == "fold") return TransformKind::kFold;
    if (s == "gaf") return TransformKind::kGaf;
    throw ConfigError("unknown transform kind: " + s + " (expected delay|fold|gaf)");
}

std::string transform_kind_to_str(TransformKind k) {
    switch (k) {
        case TransformKind::kDelay: return "delay";
        case TransformKind::kFold: return "fold";
        case TransformKind::kGaf: return "gaf";
    }
    return "?";
}

int DelayConfig::num_columns(int series_len) const {
    return static_cast<int>((series_len - n + m - 1) / m) + 1;  // ceil((L-n)/m) + 1
}

void DelayConfig::validate(int series_len) const {
    if (n < 1 || m < 1) throw ConfigError("delay embedding: n and m must be >= 1");
    if (m > n)
        throw ConfigError("delay embedding: skip m exceeds embedding n; columns would miss "
                          "series indices");
    if (series_len < n)
        throw ConfigError("delay embedding: series length " + std::to_string(series_len) +
                          " is below the embedding dimension " + std::to_string(n));
    if (image_side < n)
        throw ConfigError("delay embedding: image side " + std::to_string(image_side) +
                          " is below n = " + std::to_string(n));
    const int q = num_columns(series_len);
    if (image_side < q)
        throw ConfigError("delay embedding: image side " + std::to_string(image_side) +
                          " cannot hold " + std::to_string(q) + " columns");
}

int PixelMask::active_count() const {
    int n = 0;
    for (auto a : active) n += a;
    return n;
}

std::vector<PixelRef> delay_occupancy(int series_len, const DelayConfig& cfg) {
    cfg.validate(series_len);
    const int q = cfg.num_columns(series_len);
    std::vector<PixelRef> occ(static_cast<std::size_t>(cfg.image_side) * cfg.image_side);
    for (int col = 0; col < q; ++col) {
        const int start = (col == q - 1) ? series_len - cfg.n : col * cfg.m;
        for (int row = 0; row < cfg.n; ++row)
            occ[static_cast<std::size_t>(row) * cfg.image_side + col].a = start + row;
    }
    return occ;
}

std::vector<PixelRef> fold_occupancy(int series_len, int image_side) {
    if (static_cast<std::int64_t>(image_side) * image_side < series_len)
        throw ConfigError("fold: image side " + std::to_string(image_side) +
                          " too small for series length " + std::to_string(series_len));
    std::vector<PixelRef> occ(static_cast<std::size_t>(image_side) * image_side);
    for (int t = 0; t < series_len; ++t) occ[t].a = t;
    return occ;
}

namespace {

SeriesImage image_from_occupancy(const RegularSeries& s, const std::vector<PixelRef>& occ,
                                 int side, TransformKind kind) {
    SeriesImage img;
    img.kind = kind;
    img.d = s.d;
    img.side = side;
    img.series_len = s.t_len;
    img.occupancy = occ;
    img.pixels.assign(static_cast<std::size_t>(s.d) * side * side, 0.0);
    for (int c = 0; c < s.d; ++c)
        for (int p = 0; p < side * side; ++p)
            if (!occ[p].is_padding())
                img.pixels[static_cast<std::size_t>(c) * side * side + p] = s.at(c, occ[p].a);
    return img;
}

void check_occupancy_complete(const SeriesImage& img) {
    std::vector<char> seen(img.series_len, 0);
    for (const auto& ref : img.occupancy) {
        if (ref.is_padding()) continue;
        if (ref.a < img.series_len) seen[ref.a] = 1;
        if (ref.is_pair() && ref.b < img.series_len) seen[ref.b] = 1;
    }
    for (int t = 0; t < img.series_len; ++t)
        if (!seen[t])
            throw DataError("image occupancy is missing series index " + std::to_string(t));
}

}  // namespace

SeriesImage delay_embed(const RegularSeries& s, const DelayConfig& cfg) {
    return image_from_occupancy(s, delay_occupancy(s.t_len, cfg), cfg.image_side,
                                TransformKind::kDelay);
}

RegularSeries delay_invert(const SeriesImage& img) {
    check_occupancy_complete(img);
    RegularSeries out(img.d, img.series_len);
    const int pix = img.side * img.side;
    std::vector<double> sum(img.series_len);
    std::vector<int> count(img.series_len);
    for (int c = 0; c < img.d; ++c) {
        std::fill(sum.begin(), sum.end(), 0.0);
        std::fill(count.begin(), count.end(), 0);
        const double* px = img.pixels.data() + static_cast<std::size_t>(c) * pix;
        for (int p = 0; p < pix; ++p) {
            const auto& ref = img.occupancy[p];
            if (ref.is_padding() || ref.is_pair()) continue;
            sum[ref.a] += px[p];
            ++count[ref.a];
        }
        for (int t = 0; t < img.series_len; ++t) out.at(c, t) = sum[t] / count[t];
    }
    return out;
}

RegularSeries delay_invert_first(const SeriesImage& img) {
    check_occupancy_complete(img);
    RegularSeries out(img.d, img.series_len);
    const int pix = img.side * img.side;
    // First occurrence in column construction order: scan columns, then rows.
    std::vector<int> first_pixel(img.series_len, -1);
    for (int col = 0; col < img.side; ++col)
        for (int row = 0; row < img.side; ++row) {
            const int p = row * img.side + col;
            const auto& ref = img.occupancy[p];
            if (ref.is_padding() || ref.is_pair()) continue;
            if (first_pixel[ref.a] < 0) first_pixel[ref.a] = p;
        }
    for (int c = 0; c < img.d; ++c) {
        const double* px = img.pixels.data() + static_cast<std::size_t>(c) * pix;
        for (int t = 0; t < img.series_len; ++t) out.at(c, t) = px[first_pixel[t]];
    }
    return out;
}

SeriesImage fold(const RegularSeries& s, int image_side) {
    return image_from_occupancy(s, fold_occupancy(s.t_len, image_side), image_side,
                                TransformKind::kFold);
}

RegularSeries unfold(const SeriesImage& img) { return delay_invert(img); }

SeriesImage gaf(const RegularSeries& s, int image_side) {
    const int L = s.t_len;
    const int side = image_side > 0 ? image_side : L;
    if (side < L) throw ConfigError("gaf: image side must be at least the series length");
    for (double v : s.values)
        if (std::abs(v) > 1.0)
            throw DataError("gaf: values must lie in [-1, 1]");

    SeriesImage img;
    img.kind = TransformKind::kGaf;
    img.d = s.d;
    img.side = side;
    img.series_len = L;
    img.pixels.assign(static_cast<std::size_t>(s.d) * side * side, 0.0);
    img.occupancy.assign(static_cast<std::size_t>(side) * side, PixelRef{});
    img.gaf_signs.assign(static_cast<std::size_t>(s.d) * L, 1);
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) {
            auto& ref = img.occupancy[static_cast<std::size_t>(i) * side + j];
            ref.a = i;
            ref.b = j;
        }
    std::vector<double> phi(L);
    for (int c = 0; c < s.d; ++c) {
        for (int t = 0; t < L; ++t) {
            phi[t] = std::acos(std::clamp(s.at(c, t), -1.0, 1.0));
            img.gaf_signs[static_cast<std::size_t>(c) * L + t] = s.at(c, t) < 0 ? -1 : 1;
        }
        double* px = img.pixels.data() + static_cast<std::size_t>(c) * side * side;
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j) px[i * side + j] = std::cos(phi[i] + phi[j]);
    }
    return img;
}

RegularSeries gaf_invert(const SeriesImage& img) {
    if (img.kind != TransformKind::kGaf) throw DataError("gaf_invert: not a Gramian image");
    RegularSeries out(img.d, img.series_len);
    const int pix = img.side * img.side;
    for (int c = 0; c < img.d; ++c) {
        const double* px = img.pixels.data() + static_cast<std::size_t>(c) * pix;
        for (int t = 0; t < img.series_len; ++t) {
            const double g = std::clamp(px[t * img.side + t], -1.0, 1.0);
            const double mag = std::sqrt((g + 1.0) * 0.5);
            const double sign =
                img.gaf_signs.empty()
                    ? 1.0
                    : static_cast<double>(img.gaf_signs[static_cast<std::size_t>(c) *
                                                            img.series_len +
                                                        t]);
            out.at(c, t) = sign * mag;
        }
    }
    return out;
}

RegularSeries invert(const SeriesImage& img) {
    return img.kind == TransformKind::kGaf ? gaf_invert(img) : delay_invert(img);
}

PixelMask mask_to_pixels(const std::vector<std::uint8_t>& observed, int d, int series_len,
                         const std::vector<PixelRef>& occupancy, int side) {
    if (static_cast<int>(occupancy.size()) != side * side)
        throw DataError("mask_to_pixels: occupancy/side mismatch");
    if (static_cast<int>(observed.size()) != d * series_len)
        throw DataError("mask_to_pixels: observed grid shape mismatch");
    PixelMask mask;
    mask.d = d;
    mask.side = side;
    mask.active.assign(static_cast<std::size_t>(d) * side * side, 0);
    for (int c = 0; c < d; ++c) {
        const std::uint8_t* obs = observed.data() + static_cast<std::size_t>(c) * series_len;
        std::uint8_t* act = mask.active.data() + static_cast<std::size_t>(c) * side * side;
        for (int p = 0; p < side * side; ++p) {
            const auto& ref = occupancy[p];
            if (ref.is_padding()) continue;
            bool on = obs[ref.a] != 0;
            if (ref.is_pair()) on = on && obs[ref.b] != 0;
            act[p] = on ? 1 : 0;
        }
    }
    return mask;
}

PixelMask mask_to_pixels(const IrregularSeries& s, const SeriesImage& img) {
    if (s.d != img.d || s.t_len != img.series_len)
        throw DataError("mask_to_pixels: series/image shape mismatch");
    return mask_to_pixels(s.observed, s.d, s.t_len, img.occupancy, img.side);
}

std::vector<int> occupancy_multiplicity(const std::vector<PixelRef>& occupancy,
                                        int series_len) {
    std::vector<int> mult(series_len, 0);
    for (const auto& ref : occupancy) {
        if (ref.is_padding() || ref.is_pair()) continue;
        ++mult[ref.a];
    }
    return mult;
}

Tensor series_to_image_op(const Tensor& x, const std::vector<PixelRef>& occupancy, int side) {
    const auto& xs = x.shape();
    if (xs.size() != 3) throw DataError("series_to_image_op: input must be [B,d,L]");
    const int B = xs[0], d = xs[1], L = xs[2];
    const int pix = side * side;
    if (static_cast<int>(occupancy.size()) != pix)
        throw DataError("series_to_image_op: occupancy/side mismatch");

    std::vector<double> v(static_cast<std::int64_t>(B) * d * pix, 0.0);
    const auto& xv = x.values();
    for (int bc = 0; bc < B * d; ++bc) {
        const double* src = xv.data() + static_cast<std::int64_t>(bc) * L;
        double* dst = v.data() + static_cast<std::int64_t>(bc) * pix;
        for (int p = 0; p < pix; ++p)
            if (!occupancy[p].is_padding()) dst[p] = src[occupancy[p].a];
    }
    auto xn = x.node().get();
    return detail::make_op(Shape{B, d, side, side}, std::move(v), {x},
                           [xn, occupancy, B, d, L, pix](TensorNode& n) {
                               xn->ensure_grad();
                               for (int bc = 0; bc < B * d; ++bc) {
                                   double* gx = xn->g.data() + static_cast<std::int64_t>(bc) * L;
                                   const double* gy =
                                       n.g.data() + static_cast<std::int64_t>(bc) * pix;
                                   for (int p = 0; p < pix; ++p)
                                       if (!occupancy[p].is_padding())
                                           gx[occupancy[p].a] += gy[p];
                               }
                           });
}

Tensor gaf_image_op(const Tensor& x, int side) {
    const auto& xs = x.shape();
    if (xs.size() != 3) throw DataError("gaf_image_op: input must be [B,d,L]");
    const int B = xs[0], d = xs[1], L = xs[2];
    if (side < L) throw DataError("gaf_image_op: image side below series length");
    constexpr double eps = 1e-6;

    const int pix = side * side;
    const std::int64_t rows = static_cast<std::int64_t>(B) * d;
    std::vector<double> phi(rows * L), dphi(rows * L);
    const auto& xv = x.values();
    for (std::int64_t r = 0; r < rows; ++r)
        for (int t = 0; t < L; ++t) {
            const double c = std::clamp(xv[r * L + t], -1.0 + eps, 1.0 - eps);
            phi[r * L + t] = std::acos(c);
            const bool interior = xv[r * L + t] > -1.0 + eps && xv[r * L + t] < 1.0 - eps;
            dphi[r * L + t] = interior ? -1.0 / std::sqrt(1.0 - c * c) : 0.0;
        }
    std::vector<double> v(rows * pix, 0.0);
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* ph = phi.data() + r * L;
        double* dst = v.data() + r * pix;
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j) dst[i * side + j] = std::cos(ph[i] + ph[j]);
    }
    auto xn = x.node().get();
    return detail::make_op(
        Shape{B, d, side, side}, std::move(v), {x},
        [xn, rows, L, side, pix, phi = std::move(phi), dphi = std::move(dphi)](TensorNode& n) {
            xn->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* ph = phi.data() + r * L;
                const double* dp = dphi.data() + r * L;
                const double* gy = n.g.data() + r * pix;
                double* gx = xn->g.data() + r * L;
                // dG_ij/dx_t = -sin(phi_i + phi_j) * dphi_t/dx_t for t in {i, j}
                for (int i = 0; i < L; ++i)
                    for (int j = 0; j < L; ++j) {
                        const double gs = -std::sin(ph[i] + ph[j]) * gy[i * side + j];
                        gx[i] += gs * dp[i];
                        gx[j] += gs * dp[j];
                    }
            }
        });
}

}  // namespace tsgen
