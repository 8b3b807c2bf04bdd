#include "foldnet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "foldnet/csv.hpp"
#include "foldnet/rng.hpp"
#include "foldnet/util.hpp"

namespace foldnet {

int label_hand(const PokerHand& hand) {
  std::array<int, 5> ranks;
  std::array<int, 5> suits;
  for (int i = 0; i < 5; ++i) {
    const auto& card = hand.cards[i];
    if (card.suit < 1 || card.suit > 4) throw std::invalid_argument("label_hand: suit out of range");
    if (card.rank < 1 || card.rank > 13) throw std::invalid_argument("label_hand: rank out of range");
    ranks[i] = card.rank;
    suits[i] = card.suit;
  }
  std::set<std::pair<int, int>> distinct;
  for (int i = 0; i < 5; ++i) distinct.insert({suits[i], ranks[i]});
  if (distinct.size() != 5) throw std::invalid_argument("label_hand: duplicate card");

  std::array<int, 14> rank_count{};
  for (int r : ranks) ++rank_count[r];
  int pairs = 0, trips = 0, quads = 0;
  for (int r = 1; r <= 13; ++r) {
    if (rank_count[r] == 2) ++pairs;
    if (rank_count[r] == 3) ++trips;
    if (rank_count[r] == 4) ++quads;
  }

  const bool flush = std::all_of(suits.begin(), suits.end(), [&](int s) { return s == suits[0]; });

  std::array<int, 5> sorted_ranks = ranks;
  std::sort(sorted_ranks.begin(), sorted_ranks.end());
  const bool five_distinct =
      std::adjacent_find(sorted_ranks.begin(), sorted_ranks.end()) == sorted_ranks.end();
  const bool run_of_five = five_distinct && sorted_ranks[4] - sorted_ranks[0] == 4;
  const bool ace_high = five_distinct && sorted_ranks[0] == 1 && sorted_ranks[1] == 10 &&
                        sorted_ranks[2] == 11 && sorted_ranks[3] == 12 && sorted_ranks[4] == 13;
  const bool straight = run_of_five || ace_high;  // ace plays low (A2345) and high (TJQKA)

  if (straight && flush) return ace_high ? 9 : 8;
  if (quads) return 7;
  if (trips && pairs) return 6;
  if (flush) return 5;
  if (straight) return 4;
  if (trips) return 3;
  if (pairs == 2) return 2;
  if (pairs == 1) return 1;
  return 0;
}

namespace {

void fill_row(Matrix& inputs, std::size_t row, const PokerHand& hand) {
  for (int i = 0; i < 5; ++i) {
    inputs(row, 2 * i) = hand.cards[i].suit;
    inputs(row, 2 * i + 1) = hand.cards[i].rank;
  }
}

}  // namespace

LabeledDataset generate_poker(std::size_t n, std::uint64_t seed, PokerMode mode) {
  LabeledDataset ds;
  ds.n_classes = 10;
  if (mode == PokerMode::kUniformOrdered) {
    if (n < 1) throw std::invalid_argument("generate_poker: n must be >= 1 in uniform mode");
    ds.inputs.resize(n, 10);
    ds.labels.resize(n);
    Rng rng(seed);
    for (std::size_t row = 0; row < n; ++row) {
      PokerHand hand;
      std::uint64_t used = 0;  // 52-bit deck occupancy
      for (int i = 0; i < 5; ++i) {
        int card;
        do {
          card = static_cast<int>(rng.below(52));
        } while (used & (1ull << card));
        used |= 1ull << card;
        hand.cards[i] = {card / 13 + 1, card % 13 + 1};
      }
      fill_row(ds.inputs, row, hand);
      ds.labels[row] = label_hand(hand);
    }
    ds.provenance = "poker:uniform_ordered:n=" + std::to_string(n) + ":seed=" + std::to_string(seed);
  } else {
    const std::size_t total = 2598960;  // C(52,5)
    ds.inputs.resize(total, 10);
    ds.labels.resize(total);
    std::size_t row = 0;
    for (int a = 0; a < 52; ++a)
      for (int b = a + 1; b < 52; ++b)
        for (int c = b + 1; c < 52; ++c)
          for (int d = c + 1; d < 52; ++d)
            for (int e = d + 1; e < 52; ++e) {
              PokerHand hand;
              const int cards[5] = {a, b, c, d, e};
              for (int i = 0; i < 5; ++i) hand.cards[i] = {cards[i] / 13 + 1, cards[i] % 13 + 1};
              fill_row(ds.inputs, row, hand);
              ds.labels[row] = label_hand(hand);
              ++row;
            }
    ds.provenance = "poker:exhaustive_combinations";
  }
  return ds;
}

UciLoadResult load_uci_poker(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_uci_poker: cannot open " + path.string());
  std::vector<std::array<int, 11>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<int, 11> fields;
    std::size_t start = 0, count = 0;
    while (true) {
      const auto pos = line.find(',', start);
      const std::string tok = line.substr(start, pos == std::string::npos ? pos : pos - start);
      int value = 0;
      try {
        std::size_t used = 0;
        value = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw std::runtime_error("load_uci_poker: " + path.string() + ":" +
                                 std::to_string(line_no) + ": bad integer '" + tok + "'");
      }
      if (count >= 11) {
        throw std::runtime_error("load_uci_poker: " + path.string() + ":" +
                                 std::to_string(line_no) + ": more than 11 fields");
      }
      fields[count++] = value;
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (count != 11) {
      throw std::runtime_error("load_uci_poker: " + path.string() + ":" + std::to_string(line_no) +
                               ": expected 11 fields, got " + std::to_string(count));
    }
    rows.push_back(fields);
  }

  UciLoadResult result;
  result.data.n_classes = 10;
  result.data.inputs.resize(rows.size(), 10);
  result.data.labels.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    PokerHand hand;
    for (int i = 0; i < 5; ++i) hand.cards[i] = {rows[r][2 * i], rows[r][2 * i + 1]};
    const int computed = label_hand(hand);
    const int file_label = rows[r][10];
    if (file_label < 0 || file_label > 9) {
      throw std::runtime_error("load_uci_poker: " + path.string() + ": class out of range at row " +
                               std::to_string(r + 1));
    }
    if (computed != file_label) ++result.label_mismatches;
    fill_row(result.data.inputs, r, hand);
    result.data.labels[r] = file_label;
  }
  result.data.provenance = "uci:" + path.string();
  return result;
}

LabeledDataset generate_egg(const EggSpec& spec) {
  if (spec.dim < 1) throw std::invalid_argument("generate_egg: dim must be >= 1");
  if (!(spec.r_in > 0 && spec.r_in < spec.r_mid && spec.r_mid < spec.r_out)) {
    throw std::invalid_argument("generate_egg: need 0 < r_in < r_mid < r_out");
  }
  if (spec.per_class == 0) throw std::invalid_argument("generate_egg: per_class must be >= 1");

  const std::size_t n = 2 * spec.per_class;
  LabeledDataset ds;
  ds.n_classes = 2;
  ds.inputs.resize(n, spec.dim);
  ds.labels.resize(n);
  Rng rng(spec.seed);
  const double N = spec.dim;

  // Uniform direction from gaussians, radius via inverse-CDF of r^(N-1) dr.
  auto sample_point = [&](double lo, double hi, std::size_t row) {
    Vector dir(spec.dim);
    double norm2;
    do {
      for (int k = 0; k < spec.dim; ++k) dir[k] = rng.gaussian();
      norm2 = dir.squaredNorm();
    } while (norm2 == 0.0);
    dir /= std::sqrt(norm2);
    const double u = rng.uniform();
    const double r =
        std::pow(std::pow(lo, N) + u * (std::pow(hi, N) - std::pow(lo, N)), 1.0 / N);
    ds.inputs.row(row) = (r * dir).transpose();
  };

  for (std::size_t i = 0; i < spec.per_class; ++i) {
    sample_point(0.0, spec.r_in, i);
    ds.labels[i] = 0;
  }
  for (std::size_t i = 0; i < spec.per_class; ++i) {
    sample_point(spec.r_mid, spec.r_out, spec.per_class + i);
    ds.labels[spec.per_class + i] = 1;
  }
  std::ostringstream prov;
  prov << "egg:dim=" << spec.dim << ":r=(" << format_double(spec.r_in) << ","
       << format_double(spec.r_mid) << "," << format_double(spec.r_out)
       << "):per_class=" << spec.per_class << ":seed=" << spec.seed;
  ds.provenance = prov.str();
  return ds;
}

void save_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::vector<std::string> header;
  for (int c = 0; c < ds.inputs.cols(); ++c) header.push_back("x" + std::to_string(c));
  header.push_back("label");
  CsvWriter csv(header);
  std::vector<std::string> row(ds.inputs.cols() + 1);
  for (Eigen::Index r = 0; r < ds.inputs.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.inputs.cols(); ++c) row[c] = format_double(ds.inputs(r, c));
    row.back() = std::to_string(ds.labels[r]);
    csv.append_row(row);
  }
  atomic_write_file(path, csv.str());

  nlohmann::json meta;
  meta["provenance"] = ds.provenance;
  meta["n"] = ds.labels.size();
  meta["d"] = ds.inputs.cols();
  meta["n_classes"] = ds.n_classes;
  atomic_write_file(path.string() + ".meta.json", meta.dump(2) + "\n");
}

LabeledDataset load_dataset_csv(const std::filesystem::path& path) {
  const CsvTable table = load_csv_file(path);
  if (table.header.empty() || table.header.back() != "label") {
    throw std::runtime_error("load_dataset_csv: last column must be 'label' in " + path.string());
  }
  const int d = static_cast<int>(table.header.size()) - 1;
  LabeledDataset ds;
  ds.inputs.resize(table.rows.size(), d);
  ds.labels.resize(table.rows.size());
  int max_label = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (int c = 0; c < d; ++c) ds.inputs(r, c) = parse_double(table.rows[r][c]);
    ds.labels[r] = static_cast<int>(std::stol(table.rows[r][d]));
    if (ds.labels[r] < 0) throw std::runtime_error("load_dataset_csv: negative label");
    max_label = std::max(max_label, ds.labels[r]);
  }
  ds.n_classes = max_label + 1;
  ds.provenance = "csv:" + path.string();

  const auto meta_path = std::filesystem::path(path.string() + ".meta.json");
  if (std::filesystem::exists(meta_path)) {
    const auto meta = nlohmann::json::parse(read_file(meta_path));
    if (meta.contains("n_classes")) ds.n_classes = meta["n_classes"].get<int>();
    if (meta.contains("provenance")) ds.provenance = meta["provenance"].get<std::string>();
  }
  return ds;
}

std::pair<Vector, Vector> standardize_features(LabeledDataset& ds) {
  const Eigen::Index n = ds.inputs.rows();
  if (n < 2) throw std::invalid_argument("standardize_features: need at least 2 samples");
  Vector mean = ds.inputs.colwise().mean();
  Vector sd(ds.inputs.cols());
  for (Eigen::Index c = 0; c < ds.inputs.cols(); ++c) {
    const double var = (ds.inputs.col(c).array() - mean[c]).square().sum() / (n - 1);
    sd[c] = std::sqrt(var);
    const double scale = sd[c] > 0 ? sd[c] : 1.0;
    ds.inputs.col(c) = (ds.inputs.col(c).array() - mean[c]) / scale;
  }
  return {mean, sd};
}

}  // namespace foldnet
