#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "vlh/bitcodes.hpp"
#include "vlh/datasets.hpp"
#include "vlh/detail/parallel.hpp"
#include "vlh/detail/random.hpp"
#include "vlh/mih.hpp"
#include "vlh/vlc.hpp"

namespace vlh {

// ---- recall ------------------------------------------------------------------

namespace detail {

inline void check_recall_inputs(std::size_t n, std::size_t queries, const GroundTruth& gt, std::span<const std::size_t> ns) {
  require(gt.k >= 1, "recall: ground truth has K = 0");
  require(gt.queries() == queries, "recall: ground truth has " + std::to_string(gt.queries()) + " queries, codes have " +
                                       std::to_string(queries));
  require(queries > 0, "recall: no queries");
  for (auto i : gt.indices) require(i < n, "recall: ground truth index " + std::to_string(i) + " out of range");
  for (auto N : ns) require(N >= 1 && N <= n, "recall: N = " + std::to_string(N) + " outside [1, n = " + std::to_string(n) + "]");
}

}  // namespace detail

// Mean over queries of |top-N ∩ true K-NN| / K, where the top N are ranked by
// (Hamming distance, base index).
inline std::vector<double> hamming_ranking_recall(const BitCodeSet& base, const BitCodeSet& queries, const GroundTruth& gt,
                                                  std::span<const std::size_t> ns, std::size_t threads = 1) {
  require(base.bits() == queries.bits(), "recall: base and query code lengths differ");
  detail::check_recall_inputs(base.size(), queries.size(), gt, ns);
  const std::size_t n = base.size();
  std::vector<double> hits(queries.size() * ns.size(), 0.0);
  detail::parallel_for(queries.size(), threads, [&](std::size_t q) {
    const auto g = queries.view(q);
    std::vector<std::uint32_t> dist(n);
    std::vector<std::size_t> below(base.bits() + 2, 0);
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = detail::hamming_words(base.view(i), g);
      ++below[dist[i] + 1];
    }
    for (std::size_t h = 1; h < below.size(); ++h) below[h] += below[h - 1];
    for (auto id : gt.row(q)) {
      std::size_t rank = below[dist[id]];
      for (std::size_t j = 0; j < id; ++j) rank += dist[j] == dist[id];
      for (std::size_t t = 0; t < ns.size(); ++t)
        if (rank < ns[t]) hits[q * ns.size() + t] += 1;
    }
  });
  std::vector<double> recall(ns.size(), 0.0);
  for (std::size_t q = 0; q < queries.size(); ++q)
    for (std::size_t t = 0; t < ns.size(); ++t) recall[t] += hits[q * ns.size() + t] / static_cast<double>(gt.k);
  for (auto& r : recall) r /= static_cast<double>(queries.size());
  return recall;
}

// Same curve, with the top N taken from the multi-index kNN search.
inline std::vector<double> mih_recall(const MultiIndexTable& index, const BitCodeSet& queries, const GroundTruth& gt,
                                      std::span<const std::size_t> ns, SearchStats* total = nullptr) {
  require(index.code_bits() == queries.bits(), "recall: index and query code lengths differ");
  detail::check_recall_inputs(index.size(), queries.size(), gt, ns);
  const std::size_t top = *std::max_element(ns.begin(), ns.end());
  std::vector<double> recall(ns.size(), 0.0);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    SearchStats stats;
    const auto found = index.knn(queries[q], top, &stats);
    if (total) {
      total->candidates_total += stats.candidates_total;
      total->keys_probed += stats.keys_probed;
      total->decode_count += stats.decode_count;
      total->hamming_count += stats.hamming_count;
    }
    const auto truth = gt.row(q);
    for (std::size_t t = 0; t < ns.size(); ++t) {
      std::size_t hit = 0;
      for (std::size_t j = 0; j < ns[t]; ++j)
        hit += std::find(truth.begin(), truth.end(), found[j].id) != truth.end();
      recall[t] += static_cast<double>(hit) / static_cast<double>(gt.k);
    }
  }
  for (auto& r : recall) r /= static_cast<double>(queries.size());
  return recall;
}

// ---- storage -------------------------------------------------------------------

struct StorageReport {
  std::uint32_t code_bits = 0;
  std::vector<std::uint32_t> widths;
  std::vector<double> expected_length;  // L^(m)
  double total_expected_length = 0;     // L
  std::vector<double> huffman_length;   // NaN where the width has no dense alphabet
  double total_huffman_length = std::numeric_limits<double>::quiet_NaN();
  double mean_stored_bits = 0;          // measured records, length fields included
  double worst_stored_bits = 0;         // sum_m (ceil(log2 b) + b)
  double ratio_theoretical = 0;         // B / L
  double ratio_huffman = std::numeric_limits<double>::quiet_NaN();
  double ratio_stored = 0;              // B / mean stored bits
  // Mean bits per table entry that would be saved if the record in table m
  // left out substring m (its value is the bucket key).
  double key_omission_savings = 0;
};

inline StorageReport storage_report(const EncoderSet& set, const BitCodeSet& codes) {
  require(set.has_distributions(), "storage_report: encoder set carries no training distributions");
  require(codes.bits() == set.layout().total_bits(), "storage_report: code length does not match layout");
  require(!codes.empty(), "storage_report: empty code set");
  const auto& layout = set.layout();
  const std::size_t M = layout.substrings();
  StorageReport r;
  r.code_bits = layout.total_bits();
  r.widths = layout.widths();
  r.expected_length = set.expected_lengths();
  r.total_expected_length = set.total_expected_length();
  bool dense = true;
  double huff = 0;
  for (std::size_t m = 0; m < M; ++m) {
    if (layout.width(m) <= kDenseMaxWidth) {
      const double h = build_huffman(set.distribution(m)).expected_length(set.distribution(m));
      r.huffman_length.push_back(h);
      huff += h;
    } else {
      r.huffman_length.push_back(std::numeric_limits<double>::quiet_NaN());
      dense = false;
    }
    r.worst_stored_bits += set.length_field_bits(m) + layout.width(m);
  }
  if (dense) {
    r.total_huffman_length = huff;
    r.ratio_huffman = r.code_bits / huff;
  }
  double stored = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    auto words = codes.view(i);
    for (std::size_t m = 0; m < M; ++m) {
      const auto sym = detail::extract_bits(words, layout.offset(m), layout.width(m));
      stored += set.length_field_bits(m) + SubEncoder::codeword_length(set.encoder(m).index_of(sym));
    }
  }
  r.mean_stored_bits = stored / static_cast<double>(codes.size());
  r.key_omission_savings = r.mean_stored_bits / static_cast<double>(M);
  r.ratio_theoretical = r.code_bits / r.total_expected_length;
  r.ratio_stored = r.code_bits / r.mean_stored_bits;
  return r;
}

// ---- candidate-test timing --------------------------------------------------------

struct LogLogFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

inline LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "fit_loglog: need at least two points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0 && y[i] > 0, "fit_loglog: values must be positive");
    const double a = std::log(x[i]), b = std::log(y[i]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
    syy += b * b;
  }
  const double vx = sxx - sx * sx / n, vy = syy - sy * sy / n, cxy = sxy - sx * sy / n;
  LogLogFit f;
  f.slope = cxy / vx;
  f.intercept = (sy - f.slope * sx) / n;
  f.r2 = vy == 0 ? 1.0 : cxy * cxy / (vx * vy);
  return f;
}

struct BenchRow {
  std::size_t candidates = 0;
  double decode_ns = 0;   // median per query: decode every candidate, then Hamming
  double hamming_ns = 0;  // median per query: Hamming on fixed-length codes
  double decode_ns_per_candidate() const { return decode_ns / static_cast<double>(candidates); }
  double hamming_ns_per_candidate() const { return hamming_ns / static_cast<double>(candidates); }
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::size_t repetitions = 0;
  LogLogFit decode_fit;
  LogLogFit hamming_fit;
};

// Times the candidate test for each candidate-set size. Candidates are the
// first `count` codes (cycled if needed); both paths see the same set.
// Medians over `repetitions` runs after a discarded warm-up.
inline BenchResult bench_candidate_test(const EncoderSet& set, const BitCodeSet& codes,
                                        std::span<const std::size_t> candidate_counts, std::size_t repetitions = 30,
                                        std::uint64_t seed = 0) {
  require(!codes.empty(), "bench: empty code set");
  require(repetitions >= 1, "bench: at least one repetition");
  require(codes.bits() == set.layout().total_bits(), "bench: code length does not match layout");
  using clock = std::chrono::steady_clock;
  detail::Rng rng(seed);
  BitCode query(codes.bits());
  for (std::size_t i = 0; i < codes.bits(); ++i) query.set(i, rng.next_u64() & 1u);
  const std::size_t words = codes.words_per_code();
  BenchResult out;
  out.repetitions = repetitions;
  volatile std::uint64_t sink = 0;
  for (auto count : candidate_counts) {
    require(count >= 1, "bench: candidate counts must be positive");
    std::vector<std::uint64_t> arena, fixed;
    std::vector<std::size_t> starts;
    std::vector<std::uint32_t> lengths;
    detail::BitWriter writer(arena);
    for (std::size_t c = 0; c < count; ++c) {
      auto code = codes.view(c % codes.size());
      starts.push_back(writer.position());
      set.encode_to(code, writer);
      lengths.push_back(static_cast<std::uint32_t>(writer.position() - starts.back()));
      fixed.insert(fixed.end(), code.begin(), code.end());
    }
    arena.push_back(0);
    std::vector<std::uint64_t> scratch(words);
    auto run_decode = [&] {
      std::uint64_t acc = 0;
      for (std::size_t c = 0; c < count; ++c) {
        set.decode_from(arena, starts[c], lengths[c], scratch);
        acc += detail::hamming_words(scratch, query.words());
      }
      return acc;
    };
    auto run_hamming = [&] {
      std::uint64_t acc = 0;
      for (std::size_t c = 0; c < count; ++c)
        acc += detail::hamming_words(std::span<const std::uint64_t>(fixed).subspan(c * words, words), query.words());
      return acc;
    };
    auto median_ns = [&](auto&& fn) {
      sink = sink + fn();
      std::vector<double> t(repetitions);
      for (auto& v : t) {
        const auto a = clock::now();
        sink = sink + fn();
        v = static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - a).count());
      }
      std::sort(t.begin(), t.end());
      const std::size_t h = t.size() / 2;
      return t.size() % 2 ? t[h] : (t[h - 1] + t[h]) / 2;
    };
    BenchRow row;
    row.candidates = count;
    row.decode_ns = std::max(1.0, median_ns(run_decode));
    row.hamming_ns = std::max(1.0, median_ns(run_hamming));
    out.rows.push_back(row);
  }
  if (out.rows.size() >= 2) {
    std::vector<double> x, yd, yh;
    for (const auto& r : out.rows) {
      x.push_back(static_cast<double>(r.candidates));
      yd.push_back(r.decode_ns);
      yh.push_back(r.hamming_ns);
    }
    out.decode_fit = fit_loglog(x, yd);
    out.hamming_fit = fit_loglog(x, yh);
  }
  return out;
}

// ---- reports ---------------------------------------------------------------------

struct EvalReport {
  std::string method;
  std::uint32_t code_bits = 0;
  std::size_t k = 0;
  std::vector<std::size_t> ns;
  std::vector<double> recall;
  std::vector<double> expected_length;  // per substring
  double total_expected_length = 0;
  double mean_stored_bits = 0;
  double mean_candidates = 0;
  double mean_keys_probed = 0;
  std::vector<BenchRow> timings;
};

inline nlohmann::json to_json(const StorageReport& r) {
  auto nan_to_null = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json huff = nlohmann::json::array();
  for (double h : r.huffman_length) huff.push_back(nan_to_null(h));
  return {{"B", r.code_bits},
          {"widths", r.widths},
          {"L_per_substring", r.expected_length},
          {"L", r.total_expected_length},
          {"huffman_L_per_substring", huff},
          {"huffman_L", nan_to_null(r.total_huffman_length)},
          {"mean_stored_bits", r.mean_stored_bits},
          {"worst_stored_bits", r.worst_stored_bits},
          {"ratio_theoretical", r.ratio_theoretical},
          {"ratio_huffman", nan_to_null(r.ratio_huffman)},
          {"ratio_stored", r.ratio_stored},
          {"key_omission_savings_bits", r.key_omission_savings}};
}

inline nlohmann::json to_json(const BenchRow& r) {
  return {{"candidates", r.candidates},
          {"decode_hamming_ns", r.decode_ns},
          {"hamming_only_ns", r.hamming_ns},
          {"decode_hamming_ns_per_candidate", r.decode_ns_per_candidate()},
          {"hamming_only_ns_per_candidate", r.hamming_ns_per_candidate()}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (std::size_t i = 0; i < r.ns.size(); ++i) curve.push_back({{"N", r.ns[i]}, {"recall", r.recall[i]}});
  nlohmann::json timings = nlohmann::json::array();
  for (const auto& t : r.timings) timings.push_back(to_json(t));
  return {{"method", r.method},
          {"B", r.code_bits},
          {"K", r.k},
          {"recall", curve},
          {"L_per_substring", r.expected_length},
          {"L", r.total_expected_length},
          {"mean_stored_bits", r.mean_stored_bits},
          {"mean_candidates", r.mean_candidates},
          {"mean_keys_probed", r.mean_keys_probed},
          {"timings", timings}};
}

// One row per N: method,B,K,N,recall
inline std::string recall_csv(const EvalReport& r, bool header = true) {
  std::ostringstream out;
  out.precision(10);
  if (header) out << "method,B,K,N,recall\n";
  for (std::size_t i = 0; i < r.ns.size(); ++i)
    out << r.method << ',' << r.code_bits << ',' << r.k << ',' << r.ns[i] << ',' << r.recall[i] << '\n';
  return out.str();
}

}  // namespace vlh
