#include "saf/isbcs.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "saf/error.hpp"

namespace saf {

void SwapConfig::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("swap probability p must be in [0, 1]");
}

std::vector<std::pair<std::size_t, std::size_t>> pair_by_class(std::span<const int> labels,
                                                               Rng& rng) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (auto& [label, members] : groups) {
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t k = 0; k + 1 < members.size(); k += 2) {
      pairs.emplace_back(members[k], members[k + 1]);
    }
  }
  return pairs;
}

std::vector<SwapRecord> isbcs_swap_inplace(std::span<float> data, std::size_t channels,
                                           std::size_t samples, std::span<const int> labels,
                                           double p, Rng& rng) {
  const std::size_t stride = channels * samples;
  if (data.size() != labels.size() * stride) throw ValidationError("swap buffer size mismatch");
  std::vector<SwapRecord> records;
  std::vector<bool> paired(labels.size(), false);
  for (const auto& [a, b] : pair_by_class(labels, rng)) {
    SwapRecord rec{a, b, std::vector<bool>(channels, false)};
    for (std::size_t c = 0; c < channels; ++c) {
      if (!rng.bernoulli(p)) continue;
      rec.swapped_channels[c] = true;
      auto* pa = data.data() + a * stride + c * samples;
      auto* pb = data.data() + b * stride + c * samples;
      std::swap_ranges(pa, pa + samples, pb);
    }
    paired[a] = paired[b] = true;
    records.push_back(std::move(rec));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!paired[i]) records.push_back({i, i, std::vector<bool>(channels, false)});
  }
  return records;
}

SwapResult isbcs_augment_batch(std::span<const Epoch> batch, const SwapConfig& cfg, Rng& rng) {
  cfg.validate();
  SwapResult result;
  if (batch.empty()) return result;
  const std::size_t channels = batch.front().channels;
  const std::size_t samples = batch.front().samples;
  std::vector<float> data;
  std::vector<int> labels;
  data.reserve(batch.size() * channels * samples);
  for (const auto& e : batch) {
    if (e.channels != channels || e.samples != samples) {
      throw ValidationError("swap batch epochs must share (C, M)");
    }
    data.insert(data.end(), e.x.begin(), e.x.end());
    labels.push_back(e.y);
  }
  result.records = isbcs_swap_inplace(data, channels, samples, labels, cfg.p, rng);

  const std::size_t stride = channels * samples;
  result.epochs.reserve(cfg.keep_originals ? 2 * batch.size() : batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Epoch e = batch[i];
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(i * stride), stride, e.x.begin());
    result.epochs.push_back(std::move(e));
  }
  if (cfg.keep_originals) result.epochs.insert(result.epochs.end(), batch.begin(), batch.end());
  return result;
}

void write_swap_log(std::span<const SwapRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "a,b,mask\n";
  for (const auto& r : records) {
    out << r.a << ',' << r.b << ',';
    for (bool m : r.swapped_channels) out << (m ? '1' : '0');
    out << '\n';
  }
}

}  // namespace saf
