#include <algorithm>
#include <set>

#include "doctest.h"
#include "geomlab/geometry.hpp"
#include "geomlab/rng.hpp"

using namespace geomlab;

TEST_CASE("box_to_bins worked example") {
  BinGrid grid(256, 256, 32, 32);
  BinBox b = box_to_bins({1.0, 40, 60, 100, 130}, grid);
  CHECK(b.a1 == 1);
  CHECK(b.b1 == 1);
  CHECK(b.a2 == 4);
  CHECK(b.b2 == 5);
}

TEST_CASE("box spanning the full image covers all bins") {
  BinGrid grid(64, 64, 8, 8);
  BinBox b = box_to_bins({1.0, 0, 0, 64, 64}, grid);
  CHECK(b.a1 == 0);
  CHECK(b.b1 == 0);
  CHECK(b.a2 == grid.grid_w());
  CHECK(b.b2 == grid.grid_h());
  CHECK(b.cells() == grid.total());
}

TEST_CASE("box strictly inside one bin maps to that single bin") {
  BinGrid grid(64, 64, 8, 8);
  BinBox b = box_to_bins({1.0, 17, 25, 22, 30}, grid);
  CHECK(b.a2 == b.a1 + 1);
  CHECK(b.b2 == b.b1 + 1);
  CHECK(b.a1 == 2);
  CHECK(b.b1 == 3);
}

TEST_CASE("box outside image is an error") {
  BinGrid grid(32, 32, 8, 8);
  CHECK_THROWS_AS(box_to_bins({1.0, -1, 0, 8, 8}, grid), Error);
  CHECK_THROWS_AS(box_to_bins({1.0, 0, 0, 33, 8}, grid), Error);
  CHECK_THROWS_AS(box_to_bins({1.0, 8, 8, 8, 16}, grid), Error);
}

TEST_CASE("bin grid validates divisibility") {
  CHECK_THROWS_AS(BinGrid(32, 32, 5, 8), ConfigError);
  CHECK_THROWS_AS(BinGrid(32, 32, 0, 8), ConfigError);
}

TEST_CASE("box_to_bins covers every pixel and is monotone (randomized)") {
  Rng rng(2024);
  for (int iter = 0; iter < 10000; ++iter) {
    const int bin = 1 << rng.uniform_int(0, 4);  // 1..16
    const int cellsw = static_cast<int>(rng.uniform_int(2, 16));
    const int W = bin * cellsw;
    double a1 = rng.uniform(0, W - 1);
    double a2 = rng.uniform(a1 + 1e-3, W);
    double b1 = rng.uniform(0, W - 1);
    double b2 = rng.uniform(b1 + 1e-3, W);
    BinGrid grid(W, W, bin, bin);
    Detection det{1.0, a1, b1, a2, b2};
    BinBox box = box_to_bins(det, grid);
    CHECK(box.a1 < box.a2);
    CHECK(box.b1 < box.b2);
    CHECK(box.a1 >= 0);
    CHECK(box.b2 <= grid.grid_h());
    // every pixel center of the box lies inside a selected bin
    CHECK(static_cast<int>(std::floor(a1 / bin)) == box.a1);
    CHECK(static_cast<int>(std::ceil(a2 / bin)) == box.a2);
    // monotone: enlarging never removes bins
    Detection larger{1.0, std::max(0.0, a1 - 1), std::max(0.0, b1 - 1),
                     std::min<double>(W, a2 + 1), std::min<double>(W, b2 + 1)};
    BinBox big = box_to_bins(larger, grid);
    CHECK(big.a1 <= box.a1);
    CHECK(big.b1 <= box.b1);
    CHECK(big.a2 >= box.a2);
    CHECK(big.b2 >= box.b2);
  }
}

TEST_CASE("augment_caption basics") {
  BinGrid grid(32, 32, 8, 8);  // 4x4 cells
  Vocab vocab = Vocab::build(grid.grid_w(), grid.grid_h());
  const auto caption = vocab.encode_text("a dark square on plain");

  SUBCASE("below-threshold detection leaves the caption unchanged") {
    auto r = augment_caption(caption, "watermark", {{0.3, 1, 1, 7, 7}}, 0.5, grid, vocab);
    std::vector<int> expect = caption;
    expect.resize(64, Vocab::kPad);
    CHECK(r.tokens == expect);
    CHECK_FALSE(r.truncated);
  }

  SUBCASE("single-bin detection appends concept + one location token") {
    // cell (m=2,n=3): pixels x in [16,24), y in [24,32)
    auto r = augment_caption(caption, "watermark", {{0.9, 17, 25, 23, 31}}, 0.5, grid, vocab);
    std::vector<int> expect = caption;
    expect.push_back(vocab.concept_id("watermark"));
    expect.push_back(vocab.location_id(2, 3));
    expect.resize(64, Vocab::kPad);
    CHECK(r.tokens == expect);
  }

  SUBCASE("two detections straddling the threshold append exactly one group") {
    std::vector<Detection> dets = {{0.9, 17, 25, 23, 31}, {0.2, 0, 0, 8, 8}};
    auto r = augment_caption(caption, "watermark", dets, 0.5, grid, vocab);
    int concept_count = 0;
    for (int id : r.tokens)
      if (vocab.is_concept(id)) ++concept_count;
    CHECK(concept_count == 1);
  }

  SUBCASE("empty detection list is the identity (up to padding)") {
    auto r = augment_caption(caption, "watermark", {}, 0.5, grid, vocab);
    std::vector<int> stripped;
    for (int id : r.tokens)
      if (id != Vocab::kPad) stripped.push_back(id);
    CHECK(stripped == caption);
  }

  SUBCASE("unknown concept name is an error") {
    CHECK_THROWS_AS(augment_caption(caption, "ghost", {{0.9, 0, 0, 8, 8}}, 0.5, grid, vocab),
                    ConfigError);
  }

  SUBCASE("location token order is row-major, n outer") {
    auto r = augment_caption(caption, "qr", {{0.9, 0, 0, 16, 16}}, 0.5, grid, vocab);
    std::vector<int> locs;
    for (int id : r.tokens)
      if (vocab.is_location(id)) locs.push_back(id);
    std::vector<int> expect = {vocab.location_id(0, 0), vocab.location_id(1, 0),
                               vocab.location_id(0, 1), vocab.location_id(1, 1)};
    CHECK(locs == expect);
  }

  SUBCASE("overflow drops location tokens last-first and flags truncation") {
    auto r = augment_caption(caption, "qr", {{0.9, 0, 0, 32, 32}}, 0.5, grid, vocab, 12);
    CHECK(r.truncated);
    CHECK(r.tokens.size() == 12);
    // base caption and concept token survive
    CHECK(std::count_if(r.tokens.begin(), r.tokens.end(),
                        [&](int id) { return vocab.is_concept(id); }) == 1);
  }
}

TEST_CASE("weight map worked examples") {
  BinGrid grid(32, 32, 8, 8);  // T = 16
  // 2x2 box -> K = 4
  std::vector<Detection> dets = {{1.0, 0, 0, 16, 16}};

  SUBCASE("intent mode: inside lower") {
    WeightMap wm = weight_map(dets, grid, 0.25, WeightMode::intent);
    CHECK(wm.covered == 4);
    CHECK(wm.at(0, 0) == doctest::Approx(4.0 / 13.0).epsilon(1e-12));
    CHECK(wm.at(3, 3) == doctest::Approx(16.0 / 13.0).epsilon(1e-12));
    CHECK(wm.sum() == doctest::Approx(16.0).epsilon(1e-12));
    CHECK(wm.at(0, 0) < wm.at(3, 3));
  }

  SUBCASE("literal mode reproduces the printed equation") {
    WeightMap wm = weight_map(dets, grid, 0.25, WeightMode::literal);
    CHECK(wm.at(0, 0) == doctest::Approx(16.0 / 7.0).epsilon(1e-12));
    CHECK(wm.at(3, 3) == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
    CHECK(wm.sum() == doctest::Approx(16.0).epsilon(1e-12));
  }

  SUBCASE("alpha = 1 gives the all-ones map") {
    for (auto mode : {WeightMode::intent, WeightMode::literal}) {
      WeightMap wm = weight_map(dets, grid, 1.0, mode);
      for (double v : wm.w) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  SUBCASE("no covered cells gives uniform ones") {
    WeightMap wm = weight_map({}, grid, 0.25, WeightMode::intent);
    for (double v : wm.w) CHECK(v == 1.0);
    CHECK(wm.covered == 0);
  }

  SUBCASE("alpha <= 0 is an error") {
    CHECK_THROWS_AS(weight_map(dets, grid, 0.0, WeightMode::intent), Error);
    CHECK_THROWS_AS(weight_map(dets, grid, -0.5, WeightMode::confidence), Error);
  }

  SUBCASE("confidence mode rescales to sum T") {
    std::vector<Detection> soft = {{0.8, 0, 0, 16, 16}, {0.95, 16, 16, 32, 32}};
    WeightMap wm = weight_map(soft, grid, 0.5, WeightMode::confidence);
    CHECK(wm.sum() == doctest::Approx(16.0).epsilon(1e-9));
    // higher-confidence detection gets the smaller weight
    CHECK(wm.at(2, 2) < wm.at(0, 0));
    CHECK(wm.at(0, 3) > wm.at(0, 0));  // outside > inside
  }
}

TEST_CASE("weight map normalization property over random cases") {
  Rng rng(555);
  for (int iter = 0; iter < 1000; ++iter) {
    const int gw = static_cast<int>(rng.uniform_int(2, 12));
    const int gh = static_cast<int>(rng.uniform_int(2, 12));
    BinGrid grid(gw * 4, gh * 4, 4, 4);
    const int mode_pick = static_cast<int>(rng.uniform_int(0, 2));
    const WeightMode mode = mode_pick == 0   ? WeightMode::intent
                            : mode_pick == 1 ? WeightMode::literal
                                             : WeightMode::confidence;
    const double alpha = mode == WeightMode::confidence ? rng.uniform(0.05, 2.0)
                                                        : rng.uniform(0.05, 1.0);
    std::vector<Detection> dets;
    const int nboxes = static_cast<int>(rng.uniform_int(0, 3));
    for (int b = 0; b < nboxes; ++b) {
      double a1 = rng.uniform(0, grid.image_w - 1);
      double a2 = rng.uniform(a1 + 0.5, grid.image_w);
      double b1 = rng.uniform(0, grid.image_h - 1);
      double b2 = rng.uniform(b1 + 0.5, grid.image_h);
      dets.push_back({rng.uniform(0.5, 0.99), a1, b1, a2, b2});
    }
    WeightMap wm = weight_map(dets, grid, alpha, mode);
    CHECK(std::abs(wm.sum() - grid.total()) < 1e-9);
    for (double v : wm.w) CHECK(v >= 0.0);
    if (mode != WeightMode::confidence)
      for (double v : wm.w) CHECK(v > 0.0);
  }
}

TEST_CASE("token cells and weighted cells are the identical set") {
  Rng rng(808);
  BinGrid grid(32, 32, 4, 4);
  Vocab vocab = Vocab::build(grid.grid_w(), grid.grid_h());
  const auto caption = vocab.encode_text("a mid circle on noise");
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<Detection> dets;
    const int nboxes = static_cast<int>(rng.uniform_int(1, 3));
    for (int b = 0; b < nboxes; ++b) {
      double a1 = rng.uniform(0, 28);
      double a2 = rng.uniform(a1 + 1, 32);
      double b1 = rng.uniform(0, 28);
      double b2 = rng.uniform(b1 + 1, 32);
      dets.push_back({rng.uniform(0.0, 1.0), a1, b1, a2, b2});
    }
    auto r = augment_caption(caption, "qr", dets, 0.5, grid, vocab, 128);
    std::set<int> token_cells;
    for (int id : r.tokens)
      if (vocab.is_location(id)) {
        int m, n;
        vocab.location_cell(id, m, n);
        token_cells.insert(n * grid.grid_w() + m);
      }
    WeightMap wm = weight_map(dets, grid, 0.25, WeightMode::intent);
    std::set<int> weighted;
    for (int n = 0; n < wm.gh; ++n)
      for (int m = 0; m < wm.gw; ++m)
        if (wm.covered > 0 && wm.at(m, n) < 1.0) weighted.insert(n * wm.gw + m);
    CHECK(token_cells == weighted);
  }
}

TEST_CASE("perturb_cells") {
  BinGrid grid(32, 32, 8, 8);
  std::vector<Cell> cells = {{1, 1}, {2, 1}, {1, 2}, {2, 2}};

  SUBCASE("sigma = 0 is the identity") {
    Rng rng(3);
    auto out = perturb_cells(cells, 0.0, grid, rng);
    CHECK(out == cells);
  }

  SUBCASE("huge sigma stays inside the grid") {
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
      auto out = perturb_cells(cells, 100.0, grid, rng);
      for (const Cell& c : out) {
        CHECK(c.m >= 0);
        CHECK(c.m < grid.grid_w());
        CHECK(c.n >= 0);
        CHECK(c.n < grid.grid_h());
      }
    }
  }

  SUBCASE("fixed seed reproduces the shifted set") {
    Rng r1(42), r2(42);
    auto a = perturb_cells(cells, 1.0, grid, r1);
    auto b = perturb_cells(cells, 1.0, grid, r2);
    CHECK(a == b);
  }
}

TEST_CASE("bin_iou") {
  std::vector<Cell> a = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  CHECK(bin_iou(a, a) == 1.0);
  std::vector<Cell> b = {{5, 5}, {6, 5}};
  CHECK(bin_iou(a, b) == 0.0);
  // A = 4 cells, B = A shifted so that 2 overlap -> 2/6
  std::vector<Cell> c = {{1, 0}, {2, 0}, {1, 1}, {2, 1}};
  std::vector<Cell> row_shift = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  CHECK(bin_iou(c, row_shift) == doctest::Approx(2.0 / 6.0));
  CHECK(bin_iou({}, {}) == 1.0);
  CHECK(bin_iou(a, {}) == 0.0);

  SUBCASE("symmetry and equality properties") {
    Rng rng(12);
    BinGrid grid(32, 32, 4, 4);
    for (int iter = 0; iter < 200; ++iter) {
      std::vector<Cell> x, y;
      for (int i = 0; i < 6; ++i) {
        x.push_back({static_cast<int>(rng.uniform_int(0, 7)), static_cast<int>(rng.uniform_int(0, 7))});
        y.push_back({static_cast<int>(rng.uniform_int(0, 7)), static_cast<int>(rng.uniform_int(0, 7))});
      }
      CHECK(bin_iou(x, y) == bin_iou(y, x));
      CHECK(bin_iou(x, x) == 1.0);
    }
  }
}

TEST_CASE("negative_geometry") {
  BinGrid grid(64, 64, 8, 8);  // 8x8 cells

  SUBCASE("uniform with count = T hits every cell exactly once") {
    Rng rng(1);
    auto cells = negative_geometry(grid, NegStrategy::uniform, grid.total(), rng);
    CHECK(static_cast<int>(cells.size()) == grid.total());
    std::set<std::pair<int, int>> uniq;
    for (const Cell& c : cells) uniq.insert({c.m, c.n});
    CHECK(static_cast<int>(uniq.size()) == grid.total());
  }

  SUBCASE("uniform 16 on 8x8: one cell per 2x2 block") {
    Rng rng(1);
    auto cells = negative_geometry(grid, NegStrategy::uniform, 16, rng);
    REQUIRE(cells.size() == 16);
    std::set<std::pair<int, int>> blocks;
    for (const Cell& c : cells) blocks.insert({c.m / 2, c.n / 2});
    CHECK(blocks.size() == 16);  // all 16 blocks hit exactly once
  }

  SUBCASE("random is reproducible and without replacement") {
    Rng r1(7), r2(7);
    auto a = negative_geometry(grid, NegStrategy::random, 5, r1);
    auto b = negative_geometry(grid, NegStrategy::random, 5, r2);
    CHECK(a == b);
    std::set<std::pair<int, int>> uniq;
    for (const Cell& c : a) uniq.insert({c.m, c.n});
    CHECK(uniq.size() == 5);
  }

  SUBCASE("count out of range is an error") {
    Rng rng(1);
    CHECK_THROWS_AS(negative_geometry(grid, NegStrategy::uniform, 0, rng), Error);
    CHECK_THROWS_AS(negative_geometry(grid, NegStrategy::random, grid.total() + 1, rng), Error);
  }
}

TEST_CASE("vocab round trip and structure") {
  Vocab v = Vocab::build(4, 4);
  CHECK(v.id("<pad>") == Vocab::kPad);
  CHECK(v.id("<empty>") == Vocab::kEmpty);
  // decode(encode(x)) == x
  std::vector<std::string> words = {"a", "light", "triangle", "on", "gradient"};
  CHECK(v.decode(v.encode(words)) == words);
  // location token count equals grid cell count
  int loc_count = 0;
  for (int i = 0; i < v.size(); ++i)
    if (v.is_location(i)) ++loc_count;
  CHECK(loc_count == 16);
  // ids contiguous
  CHECK(v.size() == v.base_size() + 3 + 16);

  const std::string path = "vocab_test.tsv";
  v.save(path);
  Vocab w = Vocab::load(path);
  CHECK(w.size() == v.size());
  CHECK(w.base_size() == v.base_size());
  for (int i = 0; i < v.size(); ++i) CHECK(w.token(i) == v.token(i));
  CHECK(w.location_id(2, 3) == v.location_id(2, 3));
  std::remove(path.c_str());

  CHECK_THROWS_AS(v.id("nonexistent"), ConfigError);
  CHECK_THROWS_AS(v.concept_id("ghost"), ConfigError);
}
