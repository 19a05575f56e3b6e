// Pixel-space mask machinery: hole filling, bilinear upsampling with the
// strict 0.5 threshold, overlap resolution, label smoothing, and the
// mean-field refinement loop checked against an exact dense reference.

#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "oracles.hpp"
#include "pancut/mask_refine.hpp"

using namespace pancut;

// ---------------------------------------------------------------------------
// fill_holes
// ---------------------------------------------------------------------------

TEST(FillHoles, DonutCenterIsFilled) {
    // 5x5 ring over rows/cols 1..3 with a one-cell hole in the middle
    std::vector<std::uint8_t> ring(25, 0);
    for (int r = 1; r <= 3; ++r)
        for (int c = 1; c <= 3; ++c) ring[r * 5 + c] = 1;
    ring[2 * 5 + 2] = 0;

    const auto filled = fill_holes(ring, 5, 5);
    std::vector<std::uint8_t> expect = ring;
    expect[2 * 5 + 2] = 1;
    EXPECT_EQ(filled, expect);
}

TEST(FillHoles, OpenCavityIsLeftAlone) {
    // same ring with the top wall broken: the cavity reaches the border
    std::vector<std::uint8_t> cup(25, 0);
    for (int r = 1; r <= 3; ++r)
        for (int c = 1; c <= 3; ++c) cup[r * 5 + c] = 1;
    cup[2 * 5 + 2] = 0;
    cup[1 * 5 + 2] = 0;
    EXPECT_EQ(fill_holes(cup, 5, 5), cup);
}

TEST(FillHoles, BackgroundCannotEscapeDiagonally) {
    // the center cell touches the border background only corner-to-corner;
    // under 4-connectivity that is still a hole
    const std::vector<std::uint8_t> mask = {0, 1, 1,  //
                                            1, 0, 1,  //
                                            1, 1, 1};
    const std::vector<std::uint8_t> expect = {0, 1, 1,  //
                                              1, 1, 1,  //
                                              1, 1, 1};
    EXPECT_EQ(fill_holes(mask, 3, 3), expect);
}

TEST(FillHoles, MatchesReferenceOnRandomMasks) {
    std::mt19937_64 rng(71);
    std::uniform_int_distribution<int> dim(1, 12);
    std::uniform_real_distribution<double> density(0.2, 0.8);
    for (int trial = 0; trial < 200; ++trial) {
        const int rows = dim(rng), cols = dim(rng);
        const auto mask = oracle::random_mask(rows, cols, density(rng), rng);
        const auto filled = fill_holes(mask, rows, cols);
        EXPECT_EQ(filled, oracle::fill_holes_reference(mask, rows, cols));
        // monotone: no foreground is ever removed
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) EXPECT_TRUE(filled[i]);
        // idempotent
        EXPECT_EQ(fill_holes(filled, rows, cols), filled);
    }
}

TEST(FillHoles, ShapeValidation) {
    const std::vector<std::uint8_t> mask(6, 0);
    EXPECT_THROW(fill_holes(mask, 2, 2), ShapeError);
    EXPECT_THROW(fill_holes(mask, 0, 6), ShapeError);
}

// ---------------------------------------------------------------------------
// upsample_mask
// ---------------------------------------------------------------------------

TEST(UpsampleMask, SameResolutionIsIdentity) {
    std::mt19937_64 rng(72);
    const auto mask = oracle::random_mask(5, 7, 0.5, rng);
    EXPECT_EQ(upsample_mask(mask, 5, 7, 1, 5, 7), mask);
}

TEST(UpsampleMask, DoublesADiagonalPairIntoBlocks) {
    // pixel centers sample the bilinear surface v = a*b + (1-a)(1-b) with
    // corner weights {1, .75, .25, 0}; thresholding recovers clean blocks
    const std::vector<std::uint8_t> mask = {1, 0,  //
                                            0, 1};
    const std::vector<std::uint8_t> expect = {1, 1, 0, 0,  //
                                              1, 1, 0, 0,  //
                                              0, 0, 1, 1,  //
                                              0, 0, 1, 1};
    EXPECT_EQ(upsample_mask(mask, 2, 2, 2, 4, 4), expect);
}

TEST(UpsampleMask, ExactHalfFallsToBackground) {
    // 1x2 grid onto 3 pixels: the middle pixel interpolates to exactly 0.5,
    // which the strict comparison leaves as background
    const std::vector<std::uint8_t> mask = {1, 0};
    const std::vector<std::uint8_t> expect = {1, 0, 0};
    EXPECT_EQ(upsample_mask(mask, 1, 2, 4, 1, 3), expect);
}

TEST(UpsampleMask, RowBandsBecomePixelRowBlocks) {
    // constant-along-columns masks reduce bilinear to 1-D, where integer
    // upscaling lands block boundaries exactly between pixel centers
    const int grid = 6, scale = 4;
    std::vector<std::uint8_t> mask(grid * grid, 0);
    for (int r = 1; r <= 3; ++r)
        for (int c = 0; c < grid; ++c) mask[r * grid + c] = 1;
    const auto up =
        upsample_mask(mask, grid, grid, scale, grid * scale, grid * scale);
    for (int y = 0; y < grid * scale; ++y)
        for (int x = 0; x < grid * scale; ++x)
            EXPECT_EQ(up[y * grid * scale + x], mask[(y / scale) * grid + x / scale])
                << "pixel (" << y << "," << x << ")";
}

TEST(UpsampleMask, RectangleCornersCanErode) {
    // a genuinely 2-D block loses its extreme corner pixels: diagonal mixing
    // at a rectangle corner dips the surface below the 0.5 threshold
    const int grid = 6, scale = 4, px = grid * scale;
    std::vector<std::uint8_t> mask(grid * grid, 0);
    for (int r = 1; r <= 4; ++r)
        for (int c = 0; c <= 3; ++c) mask[r * grid + c] = 1;
    const auto up = upsample_mask(mask, grid, grid, scale, px, px);
    // the pixel just inside the rect's lower-right block corner interpolates
    // 0.625 * 0.625 = ~0.39 from the lone foreground corner cell
    EXPECT_EQ(up[19 * px + 15], 0);
    // block interiors are untouched
    EXPECT_EQ(up[10 * px + 8], 1);
    EXPECT_EQ(up[10 * px + 20], 0);
}

TEST(UpsampleMask, Validation) {
    const std::vector<std::uint8_t> mask(4, 1);
    EXPECT_THROW(upsample_mask(mask, 3, 3, 1, 6, 6), ShapeError);
    EXPECT_THROW(upsample_mask(mask, 2, 2, 0, 4, 4), RangeError);
    EXPECT_THROW(upsample_mask(mask, 2, 2, 1, 1, 4), ShapeError);
}

// ---------------------------------------------------------------------------
// resolve_overlaps
// ---------------------------------------------------------------------------

namespace {

ObjectMask pixel_mask_of(int id, int order, int h, int w,
                         std::vector<std::uint8_t> bits) {
    ObjectMask m;
    m.id = id;
    m.discovery_order = order;
    m.pixel_h = h;
    m.pixel_w = w;
    m.pixel_mask = std::move(bits);
    return m;
}

} // namespace

TEST(ResolveOverlaps, EarlierDiscoveryKeepsContestedPixels) {
    std::vector<ObjectMask> masks;
    masks.push_back(pixel_mask_of(1, 0, 1, 4, {1, 1, 1, 0}));
    masks.push_back(pixel_mask_of(2, 1, 1, 4, {0, 0, 1, 1}));
    const auto out = resolve_overlaps(std::move(masks));
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].pixel_mask, (std::vector<std::uint8_t>{1, 1, 1, 0}));
    EXPECT_EQ(out[1].pixel_mask, (std::vector<std::uint8_t>{0, 0, 0, 1}));
}

TEST(ResolveOverlaps, DiscoveryOrderBeatsVectorOrder) {
    std::vector<ObjectMask> masks;
    masks.push_back(pixel_mask_of(1, 5, 1, 3, {1, 1, 0}));
    masks.push_back(pixel_mask_of(2, 2, 1, 3, {0, 1, 1}));
    const auto out = resolve_overlaps(std::move(masks));
    ASSERT_EQ(out.size(), 2u);
    // vector order is preserved, but the order-2 mask won the contested pixel
    EXPECT_EQ(out[0].id, 1);
    EXPECT_EQ(out[0].pixel_mask, (std::vector<std::uint8_t>{1, 0, 0}));
    EXPECT_EQ(out[1].pixel_mask, (std::vector<std::uint8_t>{0, 1, 1}));
}

TEST(ResolveOverlaps, FullyShadowedMaskIsDropped) {
    std::vector<ObjectMask> masks;
    masks.push_back(pixel_mask_of(1, 0, 1, 3, {1, 1, 1}));
    masks.push_back(pixel_mask_of(2, 1, 1, 3, {0, 1, 0}));
    const auto out = resolve_overlaps(std::move(masks));
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].id, 1);
}

TEST(ResolveOverlaps, MixedResolutionsRejected) {
    std::vector<ObjectMask> masks;
    masks.push_back(pixel_mask_of(1, 0, 1, 3, {1, 1, 1}));
    masks.push_back(pixel_mask_of(2, 1, 1, 4, {0, 1, 0, 0}));
    EXPECT_THROW(resolve_overlaps(std::move(masks)), ShapeError);
}

TEST(ResolveOverlaps, EmptyInputPassesThrough) {
    EXPECT_TRUE(resolve_overlaps({}).empty());
}

// ---------------------------------------------------------------------------
// masks_to_probs
// ---------------------------------------------------------------------------

TEST(MasksToProbs, SmoothedOneHotPerOwner) {
    std::vector<ObjectMask> masks;
    masks.push_back(pixel_mask_of(1, 0, 2, 2, {1, 0, 0, 0}));
    masks.push_back(pixel_mask_of(2, 1, 2, 2, {0, 1, 0, 0}));
    const DenseGrid probs = masks_to_probs(masks, 2, 2, 0.1);
    ASSERT_EQ(probs.channels, 3);  // two objects + background

    const double own = 0.9, off = 0.05;
    const double expect[4][3] = {{own, off, off},
                                 {off, own, off},
                                 {off, off, own},   // unowned -> background
                                 {off, off, own}};
    for (int p = 0; p < 4; ++p)
        for (int l = 0; l < 3; ++l)
            EXPECT_NEAR(probs.data[p * 3 + l], expect[p][l], 1e-12);
    for (int p = 0; p < 4; ++p) {
        double sum = 0.0;
        for (int l = 0; l < 3; ++l) sum += probs.data[p * 3 + l];
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

// ---------------------------------------------------------------------------
// crf_refine_probs / crf_refine
// ---------------------------------------------------------------------------

TEST(CrfRefine, InputValidation) {
    std::mt19937_64 rng(73);
    const Image img = oracle::random_image(4, 4, rng);
    const DenseGrid probs = oracle::random_probs(4, 4, 2, rng);

    CrfConfig bad = {};
    bad.iterations = 0;
    EXPECT_THROW(crf_refine_probs(probs, img, bad), RangeError);
    bad = {};
    bad.spatial_sigma = 0.0;
    EXPECT_THROW(crf_refine_probs(probs, img, bad), RangeError);
    bad = {};
    bad.bilateral_sigma_rgb = -1.0;
    EXPECT_THROW(crf_refine_probs(probs, img, bad), RangeError);

    const DenseGrid wrong = oracle::random_probs(4, 5, 2, rng);
    EXPECT_THROW(crf_refine_probs(wrong, img, CrfConfig{}), ShapeError);

    DenseGrid no_labels = DenseGrid::zeros(4, 4, 0);
    EXPECT_THROW(crf_refine_probs(no_labels, img, CrfConfig{}), ShapeError);

    DenseGrid negative = probs;
    negative.data[0] = -negative.data[0];
    EXPECT_THROW(crf_refine_probs(negative, img, CrfConfig{}), DataError);

    DenseGrid unnormalized = probs;
    unnormalized.data[1] += 0.5;
    EXPECT_THROW(crf_refine_probs(unnormalized, img, CrfConfig{}), DataError);
}

TEST(CrfRefine, ZeroCompatibilityReproducesTheUnary) {
    std::mt19937_64 rng(74);
    const Image img = oracle::random_image(8, 8, rng);
    const DenseGrid probs = oracle::random_probs(8, 8, 3, rng);
    CrfConfig cfg;
    cfg.compat_spatial = 0.0;
    cfg.compat_bilateral = 0.0;
    cfg.iterations = 4;
    const DenseGrid q = crf_refine_probs(probs, img, cfg);
    for (std::size_t i = 0; i < probs.data.size(); ++i)
        EXPECT_NEAR(q.data[i], probs.data[i], 1e-9);
}

TEST(CrfRefine, AgreesWithExactMeanField) {
    // truncated spatial taps + the coarse bilateral lattice against the
    // untruncated quadratic-cost reference, compared by argmax
    std::mt19937_64 rng(75);
    const int h = 16, w = 16, labels = 3;
    const Image img = oracle::random_image(h, w, rng);
    const DenseGrid probs = oracle::random_probs(h, w, labels, rng);

    CrfConfig cfg;
    cfg.iterations = 3;
    cfg.spatial_sigma = 1.5;
    cfg.bilateral_sigma_xy = 2.0;
    cfg.bilateral_sigma_rgb = 8.0;
    cfg.compat_spatial = 1.0;
    cfg.compat_bilateral = 1.0;

    const DenseGrid fast = crf_refine_probs(probs, img, cfg);
    const DenseGrid exact = oracle::exact_mean_field(
        probs, img, cfg.iterations, cfg.spatial_sigma, cfg.bilateral_sigma_xy,
        cfg.bilateral_sigma_rgb, cfg.compat_spatial, cfg.compat_bilateral);

    int agree = 0;
    const int n = h * w;
    for (int i = 0; i < n; ++i) {
        int af = 0, ae = 0;
        for (int l = 1; l < labels; ++l) {
            if (fast.data[i * labels + l] > fast.data[i * labels + af]) af = l;
            if (exact.data[i * labels + l] > exact.data[i * labels + ae]) ae = l;
        }
        agree += af == ae;
    }
    EXPECT_GE(static_cast<double>(agree) / n, 0.98)
        << "agreement " << agree << "/" << n;
}

TEST(CrfRefine, WrapperTakesTheArgmax) {
    std::mt19937_64 rng(76);
    const Image img = oracle::random_image(6, 6, rng);
    const DenseGrid probs = oracle::random_probs(6, 6, 4, rng);
    CrfConfig cfg;
    cfg.iterations = 2;
    const DenseGrid q = crf_refine_probs(probs, img, cfg);
    const LabelMap lm = crf_refine(probs, img, cfg);
    ASSERT_EQ(lm.labels.size(), 36u);
    for (int i = 0; i < 36; ++i) {
        int best = 0;
        for (int l = 1; l < 4; ++l)
            if (q.data[i * 4 + l] > q.data[i * 4 + best]) best = l;
        EXPECT_EQ(lm.labels[i], best);
    }
}

// ---------------------------------------------------------------------------
// refine_masks
// ---------------------------------------------------------------------------

TEST(RefineMasks, UpsamplesFillsAndStaysDisjointWithoutCrf) {
    // full-width row bands keep the bilinear surface 1-D so the expected
    // pixel masks are exact row blocks
    const int grid = 6, scale = 4, px = grid * scale;
    const std::vector<std::pair<int, int>> bands = {{1, 2}, {3, 4}};
    std::vector<ObjectMask> masks;
    for (std::size_t k = 0; k < bands.size(); ++k) {
        ObjectMask m;
        m.id = static_cast<int>(k) + 1;
        m.discovery_order = static_cast<int>(k);
        m.grid_rows = m.grid_cols = grid;
        m.patch_mask.assign(grid * grid, 0);
        for (int r = bands[k].first; r <= bands[k].second; ++r)
            for (int c = 0; c < grid; ++c) m.patch_mask[r * grid + c] = 1;
        masks.push_back(std::move(m));
    }

    const auto out = refine_masks(std::move(masks), px, px, scale, nullptr, false);
    ASSERT_EQ(out.size(), bands.size());
    std::vector<int> owners(static_cast<std::size_t>(px) * px, 0);
    for (std::size_t k = 0; k < out.size(); ++k) {
        EXPECT_EQ(out[k].pixel_h, px);
        EXPECT_EQ(out[k].pixel_w, px);
        // strips upsample to exact pixel row blocks
        for (int y = 0; y < px; ++y)
            for (int x = 0; x < px; ++x)
                EXPECT_EQ(out[k].pixel_mask[y * px + x],
                          out[k].patch_mask[(y / scale) * grid + x / scale]);
        for (std::size_t p = 0; p < out[k].pixel_mask.size(); ++p)
            owners[p] += out[k].pixel_mask[p] != 0;
    }
    for (int cnt : owners) EXPECT_LE(cnt, 1);
}

TEST(RefineMasks, CrfNeedsAnImage) {
    ObjectMask m;
    m.id = 1;
    m.grid_rows = m.grid_cols = 2;
    m.patch_mask = {1, 1, 0, 0};
    EXPECT_THROW(refine_masks({m}, 8, 8, 4, nullptr, true), ShapeError);
}

TEST(RefineMasks, CrfSnapsTheMaskToAColorEdge) {
    // two flat color bands; the planted mask under-covers the top band by two
    // pixel rows, and the bilateral term should recover them
    const int px = 24;
    Image img;
    img.height = img.width = px;
    img.rgb.assign(static_cast<std::size_t>(px) * px * 3, 0);
    for (int y = 0; y < px; ++y)
        for (int x = 0; x < px; ++x) {
            std::uint8_t* p = img.rgb.data() + (y * px + x) * 3;
            if (y < 12) p[0] = 220;  // red band
            else        p[2] = 220;  // blue band
        }

    ObjectMask m;
    m.id = 1;
    m.discovery_order = 0;
    m.grid_rows = m.grid_cols = px;  // patch grid already at pixel scale
    m.patch_mask.assign(static_cast<std::size_t>(px) * px, 0);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < px; ++x) m.patch_mask[y * px + x] = 1;

    auto band_iou = [&](const std::vector<std::uint8_t>& mask) {
        int inter = 0, uni = 0;
        for (int y = 0; y < px; ++y)
            for (int x = 0; x < px; ++x) {
                const bool in_band = y < 12;
                const bool in_mask = mask[y * px + x] != 0;
                inter += in_band && in_mask;
                uni += in_band || in_mask;
            }
        return static_cast<double>(inter) / uni;
    };

    const auto out = refine_masks({m}, px, px, 1, &img, true);
    ASSERT_EQ(out.size(), 1u);
    const double before = 10.0 / 12.0;
    EXPECT_GT(band_iou(out[0].pixel_mask), before);
}
