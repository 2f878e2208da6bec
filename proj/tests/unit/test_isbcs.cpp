#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "saf/error.hpp"
#include "saf/isbcs.hpp"
#include "test_util.hpp"

using namespace saf;

namespace {

std::vector<Epoch> make_batch(std::size_t n, std::size_t C, std::size_t M, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Epoch> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto e = testutil::random_epoch(C, M, 64.0, static_cast<int>(i % 2), "s" + std::to_string(i % 3), rng);
    e.subject_index = static_cast<int>(i % 3);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<float> channel_of(const Epoch& e, std::size_t c) {
  return {e.x.begin() + static_cast<std::ptrdiff_t>(c * e.samples),
          e.x.begin() + static_cast<std::ptrdiff_t>((c + 1) * e.samples)};
}

}  // namespace

TEST_CASE("pair_by_class examples") {
  Rng rng(0);
  SUBCASE("[0,0,1,1]") {
    const std::vector<int> labels{0, 0, 1, 1};
    const auto pairs = pair_by_class(labels, rng);
    REQUIRE(pairs.size() == 2);
    for (auto [a, b] : pairs) CHECK(labels[a] == labels[b]);
  }
  SUBCASE("[0,0,0]") {
    const std::vector<int> labels{0, 0, 0};
    CHECK(pair_by_class(labels, rng).size() == 1);
  }
  SUBCASE("[0,1]") {
    const std::vector<int> labels{0, 1};
    CHECK(pair_by_class(labels, rng).empty());
  }
  SUBCASE("every index at most once, deterministic") {
    std::vector<int> labels;
    for (int i = 0; i < 101; ++i) labels.push_back((i * 7) % 3 == 0 ? 1 : 0);
    Rng r1(5), r2(5);
    const auto p1 = pair_by_class(labels, r1), p2 = pair_by_class(labels, r2);
    CHECK(p1 == p2);
    std::set<std::size_t> seen;
    for (auto [a, b] : p1) {
      CHECK(seen.insert(a).second);
      CHECK(seen.insert(b).second);
      CHECK(labels[a] == labels[b]);
    }
  }
}

TEST_CASE("p = 0 is the identity") {
  const auto batch = make_batch(10, 5, 16, 1);
  Rng rng(3);
  const auto out = isbcs_augment_batch(batch, {0.0, 0, false}, rng);
  REQUIRE(out.epochs.size() == batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(out.epochs[i].x == batch[i].x);
}

TEST_CASE("p = 1 exchanges every channel of each pair") {
  const auto batch = make_batch(2, 15, 8, 2);  // labels 0, 1 -> no pairs
  auto same = batch;
  same[1].y = 0;
  Rng rng(4);
  const auto out = isbcs_augment_batch(same, {1.0, 0, false}, rng);
  CHECK(out.epochs[0].x == same[1].x);
  CHECK(out.epochs[1].x == same[0].x);
  CHECK(out.epochs[0].y == 0);
  CHECK(out.epochs[0].subject == same[0].subject);
  CHECK(out.epochs[0].subject_index == same[0].subject_index);
  CHECK(out.epochs[1].subject == same[1].subject);
  Rng rng2(4);
  const auto none = isbcs_augment_batch(batch, {1.0, 0, false}, rng2);
  CHECK(none.epochs[0].x == batch[0].x);
}

TEST_CASE("labels and channels are conserved within class groups") {
  const auto batch = make_batch(31, 6, 12, 9);
  Rng rng(10);
  const auto out = isbcs_augment_batch(batch, {0.5, 0, false}, rng);
  REQUIRE(out.epochs.size() == batch.size());
  std::multiset<int> yin, yout;
  std::map<int, std::multiset<std::vector<float>>> chin, chout;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    yin.insert(batch[i].y);
    yout.insert(out.epochs[i].y);
    for (std::size_t c = 0; c < 6; ++c) {
      chin[batch[i].y].insert(channel_of(batch[i], c));
      chout[out.epochs[i].y].insert(channel_of(out.epochs[i], c));
    }
    // Channel c stays at position c: swaps never move data across channel slots.
    for (std::size_t c = 0; c < 6; ++c) {
      bool found = false;
      for (const auto& b : batch)
        if (b.y == batch[i].y && channel_of(b, c) == channel_of(out.epochs[i], c)) found = true;
      CHECK(found);
    }
  }
  CHECK(yin == yout);
  CHECK(chin == chout);
}

TEST_CASE("records describe the exchange") {
  const auto batch = make_batch(9, 4, 5, 3);
  Rng rng(1);
  const auto out = isbcs_augment_batch(batch, {0.5, 0, false}, rng);
  std::set<std::size_t> covered;
  for (const auto& r : out.records) {
    covered.insert(r.a);
    covered.insert(r.b);
    REQUIRE(r.swapped_channels.size() == 4);
    if (r.a == r.b) {
      for (bool m : r.swapped_channels) CHECK_FALSE(m);
      CHECK(out.epochs[r.a].x == batch[r.a].x);
      continue;
    }
    CHECK(batch[r.a].y == batch[r.b].y);
    for (std::size_t c = 0; c < 4; ++c) {
      const auto& src = r.swapped_channels[c] ? batch[r.b] : batch[r.a];
      CHECK(channel_of(out.epochs[r.a], c) == channel_of(src, c));
    }
  }
  CHECK(covered.size() == 9);
  const auto dir = testutil::temp_dir("isbcs_log");
  write_swap_log(out.records, dir / "swaps.csv");
  std::ifstream in(dir / "swaps.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "a,b,mask");
}

TEST_CASE("determinism and keep_originals") {
  const auto batch = make_batch(12, 3, 4, 6);
  Rng r1(77), r2(77);
  const auto a = isbcs_augment_batch(batch, {0.5, 0, true}, r1);
  const auto b = isbcs_augment_batch(batch, {0.5, 0, true}, r2);
  REQUIRE(a.epochs.size() == 24);
  for (std::size_t i = 0; i < 24; ++i) CHECK(a.epochs[i].x == b.epochs[i].x);
  for (std::size_t i = 0; i < 12; ++i) CHECK(a.epochs[12 + i].x == batch[i].x);
  CHECK(a.records.size() == b.records.size());
}

TEST_CASE("swap fraction at p = 0.5 over 10000 pairs") {
  const std::size_t C = 15;
  std::vector<int> labels(20000, 0);
  std::vector<float> data(labels.size() * C, 0.0f);
  Rng rng(2024);
  const auto recs = isbcs_swap_inplace(data, C, 1, labels, 0.5, rng);
  REQUIRE(recs.size() == 10000);
  std::size_t swapped = 0;
  for (const auto& r : recs) swapped += static_cast<std::size_t>(std::count(r.swapped_channels.begin(), r.swapped_channels.end(), true));
  const double frac = static_cast<double>(swapped) / (10000.0 * C);
  CHECK(frac >= 0.49);
  CHECK(frac <= 0.51);
}

TEST_CASE("errors") {
  auto batch = make_batch(4, 3, 4, 1);
  Rng rng(0);
  CHECK(isbcs_augment_batch(std::span<const Epoch>{}, {}, rng).epochs.empty());
  CHECK_THROWS_AS(isbcs_augment_batch(batch, {1.5, 0, false}, rng), ConfigError);
  batch[2].samples = 2;
  batch[2].x.resize(6);
  CHECK_THROWS_AS(isbcs_augment_batch(batch, {0.5, 0, false}, rng), ValidationError);
}
