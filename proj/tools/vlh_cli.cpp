#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vlh/vlh.hpp"

namespace {

using nlohmann::json;

struct Options {
  // shared
  std::string input, output, queries, gt, model, index, format = "json", method_label;
  std::uint64_t seed = 0;
  std::size_t threads = vlh::detail::default_threads();
  // data
  std::size_t n = 10000, n_queries = 100, d = 64, components = 16, pca_dim = 0;
  double spread = 4.0;
  std::string query_output;
  // layout and codes
  std::uint32_t M = 0, b = 0, bits = 64;
  double correlation = 0.0;
  // quantizers
  std::size_t subspaces = 16, k = 16, restarts = 5, max_iters = 100, max_sweeps = 100;
  std::uint32_t beta = 8;
  std::vector<double> lambdas{1e-2, 1e-1, 1.0, 10.0};
  std::string base, dump_csv;
  // evaluation
  std::size_t K = 10, r = 0;
  std::vector<std::size_t> Ns{1, 10, 100, 1000};
  std::vector<std::size_t> candidates{100, 1000, 10000, 100000};
  std::size_t reps = 30;
  std::string encoder_output;
};

// ---- small helpers -------------------------------------------------------------

template <typename F>
auto named(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    const std::string what = e.what();
    if (what.find(path) != std::string::npos) throw;
    throw std::runtime_error(path + ": " + what);
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("short write: " + path);
}

vlh::VectorSet load_vectors(const std::string& path) {
  return named(path, [&] { return vlh::read_vectors(path); });
}

vlh::BitCodeSet load_codes(const std::string& path) {
  return named(path, [&] { return vlh::load_codes(path); });
}

vlh::GroundTruth load_gt(const std::string& path) {
  return named(path, [&] { return vlh::load_ground_truth(path); });
}

vlh::SubstringLayout layout_for(std::uint32_t B, const Options& o) {
  if (o.b > 0) {
    vlh::require(B % o.b == 0, "--b " + std::to_string(o.b) + " does not divide the code length " + std::to_string(B));
    return vlh::SubstringLayout::uniform(B, B / o.b);
  }
  vlh::require(o.M > 0, "a substring layout is required: pass --M or --b");
  return vlh::SubstringLayout::uniform(B, o.M);
}

std::string magic_of(const std::string& path) {
  const auto bytes = vlh::detail::read_file(path);
  vlh::require(bytes.size() >= 4, path + ": file too short to identify");
  return std::string(bytes.begin(), bytes.begin() + 4);
}

vlh::BitCodeSet encode_with_model(const std::string& model_path, const vlh::VectorSet& data, std::size_t threads) {
  const auto magic = magic_of(model_path);
  if (magic == "LSH1") {
    const auto model = named(model_path, [&] { return vlh::load_lsh(model_path); });
    return vlh::lsh_encode_all(model, data, threads);
  }
  if (magic == "BKMH") {
    const auto model = named(model_path, [&] { return vlh::load_model(model_path); });
    return vlh::encode_all(data, model, threads);
  }
  throw std::runtime_error(model_path + ": not an LSH1 or BKMH model file");
}

std::vector<std::size_t> clip_ns(std::vector<std::size_t> ns, std::size_t n) {
  std::set<std::size_t> keep;
  for (auto N : ns) keep.insert(std::min(N, n));
  return {keep.begin(), keep.end()};
}

vlh::GroundTruth truncate_gt(const vlh::GroundTruth& gt, std::size_t K) {
  if (K == 0 || K == gt.k) return gt;
  vlh::require(K <= gt.k, "--K " + std::to_string(K) + " exceeds the ground truth depth " + std::to_string(gt.k));
  vlh::GroundTruth out{K, {}};
  for (std::size_t q = 0; q < gt.queries(); ++q) out.indices.insert(out.indices.end(), gt.row(q).begin(), gt.row(q).begin() + static_cast<std::ptrdiff_t>(K));
  return out;
}

json typed_value(const std::string& v) {
  const auto parsed = json::parse(v, nullptr, false);
  if (!parsed.is_discarded() && parsed.is_number()) return parsed;
  return v;
}

// Resolved values of every option of `app`, defaults included.
json resolved_config(const CLI::App* app, const std::string& command) {
  json cfg;
  cfg["command"] = command;
  json values = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    std::vector<std::string> vals = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
    if (vals.empty()) {
      std::string def = opt->get_default_str();
      if (def.size() >= 2 && def.front() == '[' && def.back() == ']') def = def.substr(1, def.size() - 2);
      std::stringstream ss(def);
      for (std::string item; std::getline(ss, item, ',');) vals.push_back(item);
    }
    json typed = json::array();
    for (const auto& v : vals) typed.push_back(typed_value(v));
    if (opt->get_expected_max() > 1)
      values[name] = typed;
    else if (!typed.empty())
      values[name] = typed.back();
    else
      values[name] = nullptr;
  }
  cfg["options"] = values;
  return cfg;
}

void persist_config(const CLI::App* app, const std::string& command, const std::string& output, json extra = {}) {
  if (output.empty()) return;
  auto cfg = resolved_config(app, command);
  if (!extra.is_null()) cfg["results"] = std::move(extra);
  write_text(output + ".config.json", cfg.dump(2) + "\n");
}

// key = value lines; '#' starts a comment. Values of repeatable options may be
// comma separated.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    if (out.back().first.empty()) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key");
  }
  return out;
}

// ---- subcommands ---------------------------------------------------------------

void run_gen_data(const Options& o, const CLI::App* app) {
  vlh::require(o.n_queries == 0 || !o.query_output.empty(), "--query-output is required when --queries-count > 0");
  auto all = vlh::gen_gmm(o.n + o.n_queries, o.d, o.components, o.spread, o.seed);
  if (o.pca_dim > 0) all = vlh::pca(all.rows(0, o.n), o.pca_dim).apply(all);
  vlh::write_fvecs(o.output, all.rows(0, o.n));
  if (o.n_queries > 0) vlh::write_fvecs(o.query_output, all.rows(o.n, o.n_queries));
  persist_config(app, "gen-data", o.output);
}

void run_ground_truth(const Options& o, const CLI::App* app) {
  const auto base = load_vectors(o.input);
  const auto queries = load_vectors(o.queries);
  vlh::save_ground_truth(o.output, vlh::brute_force_knn(base, queries, o.K, o.threads));
  persist_config(app, "ground-truth", o.output);
}

void run_train_lsh(const Options& o, const CLI::App* app) {
  const auto data = load_vectors(o.input);
  vlh::save_lsh(o.output, vlh::lsh_train(data.dim(), o.bits, o.seed, o.correlation));
  persist_config(app, "train lsh", o.output);
}

vlh::ProductTrainOptions product_options(const Options& o) {
  vlh::ProductTrainOptions p;
  p.k = o.k;
  p.beta = o.beta;
  p.seed = o.seed;
  p.restarts = o.restarts;
  p.max_iters = o.max_iters;
  p.max_sweeps = o.max_sweeps;
  p.threads = o.threads;
  return p;
}

void run_train_kmh(const Options& o, const CLI::App* app) {
  const auto data = load_vectors(o.input);
  vlh::require(!o.lambdas.empty(), "at least one --lambda is required");
  auto opt = product_options(o);
  if (o.lambdas.size() == 1) {
    opt.lambda = o.lambdas[0];
    vlh::save_model(o.output, vlh::product_train(data, o.subspaces, vlh::QuantizerMethod::kmh, opt));
    persist_config(app, "train kmh", o.output);
    return;
  }
  // Several lambdas: keep the one with the best test recall@N (first N).
  vlh::require(!o.queries.empty() && !o.gt.empty(), "choosing among several --lambda values needs --queries and --gt");
  const auto base = o.base.empty() ? data : load_vectors(o.base);
  const auto queries = load_vectors(o.queries);
  const auto gt = truncate_gt(load_gt(o.gt), o.K);
  const std::vector<std::size_t> ns{std::min(o.Ns.front(), base.size())};
  json table = json::array();
  double best_recall = -1;
  vlh::ProductQuantizerModel best;
  for (double lambda : o.lambdas) {
    opt.lambda = lambda;
    auto model = vlh::product_train(data, o.subspaces, vlh::QuantizerMethod::kmh, opt);
    const double rec = vlh::hamming_ranking_recall(vlh::encode_all(base, model, o.threads),
                                                   vlh::encode_all(queries, model, o.threads), gt, ns, o.threads)[0];
    table.push_back({{"lambda", lambda}, {"N", ns[0]}, {"recall", rec}});
    if (rec > best_recall) {
      best_recall = rec;
      best = std::move(model);
    }
  }
  vlh::save_model(o.output, best);
  std::cout << table.dump(2) << "\n";
  persist_config(app, "train kmh", o.output, {{"lambda_selection", table}});
}

void run_train_bkmh(const Options& o, const CLI::App* app) {
  const auto data = load_vectors(o.input);
  const auto model = vlh::product_train(data, o.subspaces, vlh::QuantizerMethod::bkmh, product_options(o));
  vlh::save_model(o.output, model);
  if (!o.dump_csv.empty()) write_text(o.dump_csv, vlh::codebook_csv(model));
  persist_config(app, "train bkmh", o.output);
}

void run_encode(const Options& o, const CLI::App* app) {
  const auto data = load_vectors(o.input);
  vlh::save_codes(o.output, encode_with_model(o.model, data, o.threads));
  persist_config(app, "encode", o.output);
}

void run_compress_stats(const Options& o, const CLI::App* app) {
  const auto codes = load_codes(o.input);
  const auto layout = layout_for(static_cast<std::uint32_t>(codes.bits()), o);
  const auto set = vlh::build_encoder_set(codes, layout, {}, o.threads);
  const auto report = vlh::storage_report(set, codes);
  if (!o.encoder_output.empty()) vlh::save_encoder_set(o.encoder_output, set);
  if (o.format == "csv") {
    std::ostringstream out;
    out.precision(10);
    out << "substring,width,L,huffman_L\n";
    for (std::size_t m = 0; m < report.widths.size(); ++m) {
      out << m << ',' << report.widths[m] << ',' << report.expected_length[m] << ',';
      if (!std::isnan(report.huffman_length[m])) out << report.huffman_length[m];
      out << '\n';
    }
    write_text(o.output, out.str());
  } else {
    write_text(o.output, vlh::to_json(report).dump(2) + "\n");
  }
  persist_config(app, "compress-stats", o.output);
}

void run_build_index(const Options& o, const CLI::App* app) {
  const auto codes = load_codes(o.input);
  const auto layout = layout_for(static_cast<std::uint32_t>(codes.bits()), o);
  std::vector<std::uint64_t> ids(codes.size());
  std::iota(ids.begin(), ids.end(), 0);
  vlh::MultiIndexTable::build(codes, ids, vlh::build_encoder_set(codes, layout, {}, o.threads)).save(o.output);
  persist_config(app, "build-index", o.output);
}

void run_search(const Options& o, const CLI::App* app, bool knn) {
  const auto index = named(o.index, [&] { return vlh::MultiIndexTable::load(o.index); });
  const auto queries = load_codes(o.queries);
  std::ostringstream csv;
  csv << "query,id,distance\n";
  json results = json::array();
  for (std::size_t q = 0; q < queries.size(); ++q) {
    vlh::SearchStats stats;
    const auto g = queries[q];
    json hits = json::array();
    if (knn) {
      for (const auto& nb : index.knn(g, o.K, &stats)) {
        csv << q << ',' << nb.id << ',' << nb.distance << '\n';
        hits.push_back({{"id", nb.id}, {"distance", nb.distance}});
      }
    } else {
      for (auto id : index.r_neighbors(g, static_cast<std::uint32_t>(o.r), &stats)) {
        csv << q << ',' << id << ",\n";
        hits.push_back({{"id", id}});
      }
    }
    results.push_back({{"query", q},
                       {"neighbors", hits},
                       {"candidates", stats.candidates_total},
                       {"keys_probed", stats.keys_probed}});
  }
  const std::string text = o.format == "csv" ? csv.str() : results.dump(2) + "\n";
  if (o.output.empty())
    std::cout << text;
  else
    write_text(o.output, text);
  persist_config(app, "search", o.output);
}

void run_eval_recall(const Options& o, const CLI::App* app) {
  const auto base = load_codes(o.input);
  const auto queries = load_codes(o.queries);
  const auto gt = truncate_gt(load_gt(o.gt), o.K);
  vlh::EvalReport report;
  report.method = o.method_label;
  report.code_bits = static_cast<std::uint32_t>(base.bits());
  report.k = gt.k;
  report.ns = clip_ns(o.Ns, base.size());
  if (!o.index.empty()) {
    const auto index = named(o.index, [&] { return vlh::MultiIndexTable::load(o.index); });
    vlh::SearchStats total;
    report.recall = vlh::mih_recall(index, queries, gt, report.ns, &total);
    report.mean_candidates = static_cast<double>(total.candidates_total) / static_cast<double>(queries.size());
    report.mean_keys_probed = static_cast<double>(total.keys_probed) / static_cast<double>(queries.size());
  } else {
    report.recall = vlh::hamming_ranking_recall(base, queries, gt, report.ns, o.threads);
  }
  if (o.M > 0 || o.b > 0) {
    const auto set = vlh::build_encoder_set(base, layout_for(report.code_bits, o), {}, o.threads);
    const auto storage = vlh::storage_report(set, base);
    report.expected_length = storage.expected_length;
    report.total_expected_length = storage.total_expected_length;
    report.mean_stored_bits = storage.mean_stored_bits;
  }
  write_text(o.output, o.format == "csv" ? vlh::recall_csv(report) : vlh::to_json(report).dump(2) + "\n");
  persist_config(app, "eval-recall", o.output);
}

void run_bench(const Options& o, const CLI::App* app) {
  const auto codes = load_codes(o.input);
  Options defaults = o;
  if (o.M == 0 && o.b == 0) defaults.b = 16;
  const auto set = vlh::build_encoder_set(codes, layout_for(static_cast<std::uint32_t>(codes.bits()), defaults));
  const auto res = vlh::bench_candidate_test(set, codes, o.candidates, o.reps, o.seed);
  if (o.format == "csv") {
    std::ostringstream out;
    out << "candidates,decode_hamming_ns,hamming_only_ns\n";
    for (const auto& row : res.rows) out << row.candidates << ',' << row.decode_ns << ',' << row.hamming_ns << '\n';
    write_text(o.output, out.str());
  } else {
    json rows = json::array();
    for (const auto& row : res.rows) rows.push_back(vlh::to_json(row));
    json doc{{"B", codes.bits()},
             {"M", set.substrings()},
             {"repetitions", res.repetitions},
             {"rows", rows},
             {"decode_loglog", {{"slope", res.decode_fit.slope}, {"r2", res.decode_fit.r2}}},
             {"hamming_loglog", {{"slope", res.hamming_fit.slope}, {"r2", res.hamming_fit.r2}}}};
    write_text(o.output, doc.dump(2) + "\n");
  }
  persist_config(app, "bench", o.output);
}

// Naive two-step, KMH and B-KMH on one 2-D sample.
void run_demo_fig5(const Options& o, const CLI::App* app) {
  vlh::require(o.k >= 2 && std::has_single_bit(o.k), "--k must be a power of two >= 2");
  const auto raw = vlh::gen_gmm(o.n, std::max<std::size_t>(o.d, 2), o.components, o.spread, o.seed);
  const auto data = vlh::pca(raw, 2).apply(raw);
  const auto km = vlh::kmeans(data, o.k, o.seed, o.max_iters, o.threads);
  vlh::Codebook naive{2, static_cast<std::uint32_t>(std::countr_zero(o.k)), km.codewords, {}, 1.0, km.counts};
  for (std::size_t i = 0; i < o.k; ++i) naive.representations.push_back(i);
  naive.scale = vlh::optimal_scale(naive);
  const auto kmh = vlh::kmh_train(data, o.k, o.lambdas.front(), o.seed, o.max_iters, o.threads);
  const auto bkmh = vlh::bkmh_train(data, o.k, o.beta, o.seed, o.restarts, o.max_sweeps, o.max_iters, o.threads);

  const std::vector<std::pair<std::string, const vlh::Codebook*>> methods{
      {"naive", &naive}, {"kmh", &kmh}, {"bkmh", &bkmh}};
  std::ostringstream cw, pts;
  cw.precision(9);
  pts.precision(9);
  cw << "method,index,count,representation,x,y\n";
  json summary = json::object();
  std::vector<std::vector<std::uint32_t>> assign;
  for (const auto& [name, cb] : methods) {
    auto a = vlh::detail::assign_all(data, cb->codewords, o.threads);
    summary[name] = {{"E_quan", vlh::e_quan(data, *cb, a)},
                     {"E_aff", vlh::e_aff(*cb)},
                     {"scale", cb->scale},
                     {"beta", cb->beta}};
    for (std::size_t i = 0; i < cb->k(); ++i)
      cw << name << ',' << i << ',' << cb->counts[i] << ','
         << vlh::BitCode::from_uint(cb->representations[i], cb->beta).to_string() << ',' << cb->codeword(i)[0] << ','
         << cb->codeword(i)[1] << '\n';
    assign.push_back(std::move(a));
  }
  pts << "x,y,naive,kmh,bkmh\n";
  for (std::size_t i = 0; i < data.size(); ++i)
    pts << data.row(i)[0] << ',' << data.row(i)[1] << ',' << assign[0][i] << ',' << assign[1][i] << ',' << assign[2][i]
        << '\n';
  write_text(o.output + "_codewords.csv", cw.str());
  write_text(o.output + "_points.csv", pts.str());
  write_text(o.output + "_summary.json", summary.dump(2) + "\n");
  persist_config(app, "demo-fig5", o.output);
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Variable-length hashing, multi-index search and K-means hashing tools"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  auto add_seed = [](CLI::App* s, Options& t) { s->add_option("--seed", t.seed, "random seed")->envname("VLH_SEED"); };
  auto add_threads = [](CLI::App* s, Options& t) {
    s->add_option("--threads", t.threads, "worker threads")->check(CLI::PositiveNumber);
  };
  auto add_layout = [&](CLI::App* s) {
    s->add_option("--M", o.M, "number of substrings");
    s->add_option("--b", o.b, "substring width in bits (alternative to --M)");
  };
  auto add_format = [&](CLI::App* s) { s->add_option("--format", o.format, "report format")->check(CLI::IsMember({"json", "csv"})); };

  auto* gen = app.add_subcommand("gen-data", "Gaussian-mixture base and query sets as fvecs");
  gen->add_option("--output", o.output, "base vectors (.fvecs)")->required();
  gen->add_option("--query-output", o.query_output, "query vectors (.fvecs)");
  gen->add_option("--n", o.n, "base points");
  gen->add_option("--queries-count", o.n_queries, "query points");
  gen->add_option("--d", o.d, "dimension");
  gen->add_option("--components", o.components, "mixture components");
  gen->add_option("--spread", o.spread, "component means are uniform in [-spread, spread]^d");
  gen->add_option("--pca", o.pca_dim, "project onto this many principal directions (0 = off)");
  add_seed(gen, o);

  auto* gtc = app.add_subcommand("ground-truth", "exact Euclidean K nearest neighbors as ivecs");
  gtc->add_option("--input", o.input, "base vectors")->required();
  gtc->add_option("--queries", o.queries, "query vectors")->required();
  gtc->add_option("--K", o.K, "neighbors per query");
  gtc->add_option("--output", o.output, "ground truth (.ivecs)")->required();
  add_threads(gtc, o);

  auto* train = app.add_subcommand("train", "train a hashing model");
  train->require_subcommand(1);
  auto* lsh = train->add_subcommand("lsh", "random-hyperplane hashing");
  auto* kmh = train->add_subcommand("kmh", "K-means hashing");
  auto* bkmh = train->add_subcommand("bkmh", "block K-means hashing");
  for (auto* s : {lsh, kmh, bkmh}) {
    s->add_option("--input", o.input, "training vectors")->required();
    s->add_option("--output", o.output, "model file")->required();
    add_seed(s, o);
    add_threads(s, o);
  }
  lsh->add_option("--bits", o.bits, "code length");
  lsh->add_option("--correlation", o.correlation, "pull every direction toward a shared one, in [0, 1)");
  for (auto* s : {kmh, bkmh}) {
    s->add_option("--subspaces", o.subspaces, "product subspaces");
    s->add_option("--k", o.k, "codewords per subspace");
    s->add_option("--max-iters", o.max_iters, "K-means / KMH iterations");
  }
  kmh->add_option("--lambda", o.lambdas, "affinity weight; several values select by test recall")->expected(1, -1);
  kmh->add_option("--base", o.base, "base vectors for lambda selection (default: --input)");
  kmh->add_option("--queries", o.queries, "query vectors for lambda selection");
  kmh->add_option("--gt", o.gt, "ground truth for lambda selection");
  kmh->add_option("--K", o.K, "true neighbors per query");
  kmh->add_option("--N", o.Ns, "recall@N used for lambda selection (first value)")->expected(1, -1);
  bkmh->add_option("--beta", o.beta, "representation bits per subspace");
  bkmh->add_option("--restarts", o.restarts, "random restarts");
  bkmh->add_option("--max-sweeps", o.max_sweeps, "coordinate sweeps per restart");
  bkmh->add_option("--dump-csv", o.dump_csv, "write codewords and representations as CSV");

  auto* enc = app.add_subcommand("encode", "hash vectors with a trained model");
  enc->add_option("--model", o.model, "LSH1 or BKMH model")->required();
  enc->add_option("--input", o.input, "vectors")->required();
  enc->add_option("--output", o.output, "codes (VLH1)")->required();
  add_threads(enc, o);

  auto* stats = app.add_subcommand("compress-stats", "expected code lengths per substring");
  stats->add_option("--input", o.input, "codes (VLH1)")->required();
  stats->add_option("--output", o.output, "report")->required();
  stats->add_option("--encoder-output", o.encoder_output, "also save the encoder set (VLE1)");
  add_layout(stats);
  add_format(stats);
  add_threads(stats, o);

  auto* build = app.add_subcommand("build-index", "multi-index hash tables over compressed records");
  build->add_option("--input", o.input, "codes (VLH1)")->required();
  build->add_option("--output", o.output, "index (MIH1)")->required();
  add_layout(build);
  add_threads(build, o);

  auto* search = app.add_subcommand("search", "r-neighbor or kNN search");
  search->add_option("--index", o.index, "index (MIH1)")->required();
  search->add_option("--queries", o.queries, "query codes (VLH1)")->required();
  auto* r_opt = search->add_option("--r", o.r, "Hamming radius");
  auto* k_opt = search->add_option("--K", o.K, "nearest neighbors (instead of --r)");
  r_opt->excludes(k_opt);
  search->add_option("--output", o.output, "results (default: stdout)");
  add_format(search);

  auto* eval = app.add_subcommand("eval-recall", "recall@N of Hamming ranking");
  eval->add_option("--input", o.input, "base codes (VLH1)")->required();
  eval->add_option("--queries", o.queries, "query codes (VLH1)")->required();
  eval->add_option("--gt", o.gt, "ground truth (.ivecs)")->required();
  eval->add_option("--output", o.output, "report")->required();
  eval->add_option("--N", o.Ns, "list lengths")->expected(1, -1);
  eval->add_option("--K", o.K, "true neighbors per query (<= ground truth depth)");
  eval->add_option("--index", o.index, "rank with this MIH1 index instead of a linear scan");
  eval->add_option("--method", o.method_label, "label for the report")->default_val("codes");
  add_layout(eval);
  add_format(eval);
  add_threads(eval, o);

  auto* bench = app.add_subcommand("bench", "decode + Hamming vs Hamming-only candidate test timing");
  bench->add_option("--input", o.input, "codes (VLH1)")->required();
  bench->add_option("--output", o.output, "report")->required();
  bench->add_option("--candidates", o.candidates, "candidate-set sizes")->expected(1, -1);
  bench->add_option("--reps", o.reps, "timed repetitions")->check(CLI::Range(30, 1000000));
  add_layout(bench);
  add_format(bench);
  add_seed(bench, o);

  // The demo keeps its own option values; its defaults differ from the shared ones.
  Options od;
  od.n = 2000;
  od.d = 2;
  od.components = 6;
  od.k = 4;
  od.beta = 3;
  od.lambdas = {1.0};
  auto* demo = app.add_subcommand("demo-fig5", "naive two-step vs KMH vs B-KMH on a 2-D mixture (CSV)");
  demo->add_option("--output", od.output, "output prefix")->required();
  demo->add_option("--n", od.n, "points");
  demo->add_option("--d", od.d, "dimension before PCA to 2-D");
  demo->add_option("--components", od.components, "mixture components");
  demo->add_option("--spread", od.spread, "mixture spread");
  demo->add_option("--k", od.k, "codewords");
  demo->add_option("--beta", od.beta, "B-KMH representation bits");
  demo->add_option("--lambda", od.lambdas, "KMH affinity weight (first value)")->expected(1, -1);
  demo->add_option("--restarts", od.restarts, "B-KMH restarts");
  demo->add_option("--max-sweeps", od.max_sweeps, "B-KMH sweeps");
  demo->add_option("--max-iters", od.max_iters, "K-means / KMH iterations");
  add_seed(demo, od);
  add_threads(demo, od);

  // Arguments, with --config FILE expanded in place. Flags given on the
  // command line win over config keys.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) {
        config_path = args[i + 1];
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
        break;
      }
      if (args[i].starts_with("--config=")) {
        config_path = args[i].substr(9);
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
        break;
      }
    }
    if (!config_path.empty()) {
      std::size_t depth = 0;
      CLI::App* target = &app;
      while (depth < args.size()) {
        CLI::App* sub = nullptr;
        try {
          sub = target->get_subcommand(args[depth]);
        } catch (const CLI::OptionNotFound&) {
        }
        if (!sub) break;
        target = sub;
        ++depth;
      }
      if (target == &app) throw std::runtime_error("--config needs a subcommand");
      std::vector<std::string> injected;
      for (const auto& [key, value] : read_config_file(config_path)) {
        const std::string flag = "--" + key;
        const CLI::Option* opt = target->get_option_no_throw(flag);
        if (!opt) throw std::runtime_error(config_path + ": unknown key '" + key + "' for " + target->get_name());
        const bool given = std::any_of(args.begin() + static_cast<std::ptrdiff_t>(depth), args.end(),
                                       [&](const std::string& a) { return a == flag || a.starts_with(flag + "="); });
        if (given) continue;
        injected.push_back(flag);
        if (opt->get_expected_max() > 1) {
          std::stringstream ss(value);
          for (std::string item; std::getline(ss, item, ',');) injected.push_back(item);
        } else {
          injected.push_back(value);
        }
      }
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(depth), injected.begin(), injected.end());
    }
  } catch (const std::exception& e) {
    std::cerr << "vlh: error: " << e.what() << "\n";
    return 2;
  }

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) run_gen_data(o, gen);
    else if (*gtc) run_ground_truth(o, gtc);
    else if (*lsh) run_train_lsh(o, lsh);
    else if (*kmh) run_train_kmh(o, kmh);
    else if (*bkmh) run_train_bkmh(o, bkmh);
    else if (*enc) run_encode(o, enc);
    else if (*stats) run_compress_stats(o, stats);
    else if (*build) run_build_index(o, build);
    else if (*search) run_search(o, search, k_opt->count() > 0);
    else if (*eval) run_eval_recall(o, eval);
    else if (*bench) run_bench(o, bench);
    else if (*demo) run_demo_fig5(od, demo);
  } catch (const std::exception& e) {
    std::cerr << "vlh: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
