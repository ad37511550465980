#pragma once

#include <cstdint>
#include <vector>

#include "tsgen/series.hpp"
#include "tsgen/tensor.hpp"

namespace tsgen {

enum class TransformKind { kDelay, kFold, kGaf };

TransformKind transform_kind_from_str(const std::string& s);
std::string transform_kind_to_str(TransformKind k);

/// Delay-embedding geometry: n rows per column, skip m between column
/// starts, zero-padded into an image_side x image_side frame.
struct DelayConfig {
    int n = 8;
    int m = 3;
    int image_side = 8;

    /// Content columns for a length-L series. Columns start at 0, m, 2m, ...
    /// while start+n < L; one final column always starts at L-n so every
    /// index is represented and the roundtrip is exact for ragged lengths.
    int num_columns(int series_len) const;
    void validate(int series_len) const;
};

/// Which series index (or indices) a pixel encodes. a < 0 marks padding;
/// b >= 0 marks a two-index pixel (Gramian images, where pixel (i,j)
/// couples x_i and x_j).
struct PixelRef {
    std::int32_t a = -1;
    std::int32_t b = -1;
    bool is_padding() const { return a < 0; }
    bool is_pair() const { return b >= 0; }
};

struct SeriesImage {
    TransformKind kind = TransformKind::kDelay;
    int d = 0;
    int side = 0;
    int series_len = 0;
    std::vector<double> pixels;       // [d][side][side]
    std::vector<PixelRef> occupancy;  // [side][side]; identical across channels
    std::vector<std::int8_t> gaf_signs;  // [d][L], Gramian transform only

    double pixel(int c, int r, int col) const {
        return pixels[(static_cast<std::size_t>(c) * side + r) * side + col];
    }
};

/// Image-space activity mask: a pixel is active iff every series index it
/// encodes is observed. Padding pixels are never active.
struct PixelMask {
    int d = 0;
    int side = 0;
    std::vector<std::uint8_t> active;  // [d][side][side]

    int active_count() const;
};

std::vector<PixelRef> delay_occupancy(int series_len, const DelayConfig& cfg);
std::vector<PixelRef> fold_occupancy(int series_len, int image_side);

SeriesImage delay_embed(const RegularSeries& s, const DelayConfig& cfg);
/// Averaging inverse: x_t is the mean of every pixel that encodes index t.
RegularSeries delay_invert(const SeriesImage& img);
/// First-occurrence inverse (columns scanned left to right): the original
/// single-pixel readout, kept for ablation.
RegularSeries delay_invert_first(const SeriesImage& img);

SeriesImage fold(const RegularSeries& s, int image_side);
RegularSeries unfold(const SeriesImage& img);

/// Summation Gramian angular image: pixel(i,j) = cos(phi_i + phi_j) with
/// phi = arccos(x); requires |x| <= 1. Per-index sign bits ride along so the
/// diagonal readout x_t = sign_t * sqrt((G_tt + 1)/2) inverts exactly.
SeriesImage gaf(const RegularSeries& s, int image_side = 0);
RegularSeries gaf_invert(const SeriesImage& img);

/// Generic inverse dispatch; generated Gramian images carry no sign bits and
/// decode non-negative.
RegularSeries invert(const SeriesImage& img);

PixelMask mask_to_pixels(const IrregularSeries& s, const SeriesImage& img);
PixelMask mask_to_pixels(const std::vector<std::uint8_t>& observed, int d, int series_len,
                         const std::vector<PixelRef>& occupancy, int side);

/// How many pixels encode index t (delay/fold occupancy).
std::vector<int> occupancy_multiplicity(const std::vector<PixelRef>& occupancy, int series_len);

// ---- differentiable batch forms (training path) ---------------------------

/// x [B,d,L] -> images [B,d,side,side] via a single-index occupancy map.
/// Gradient scatters each pixel's grad back onto its series index.
Tensor series_to_image_op(const Tensor& x, const std::vector<PixelRef>& occupancy, int side);

/// x [B,d,L] -> Gramian images [B,d,side,side]. Inputs are clamped into
/// [-1+eps, 1-eps] before arccos so completed values slightly out of range
/// stay differentiable.
Tensor gaf_image_op(const Tensor& x, int side);

}  // namespace tsgen
