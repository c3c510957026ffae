#include "stigma/pipeline/config.hpp"

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>

#include <charconv>
#include <sstream>

#include "stigma/common/encoding.hpp"
#include "stigma/common/error.hpp"

namespace stigma::pipeline {

namespace pt = boost::property_tree;

namespace {

constexpr const char* kDefaults = R"([run]
seed = 0

[paths]
corpus =
lexicon =
disambiguation =
workers =
annotations =
comments =
wild =
embeddings =
dictionary =

[corpus]
sample_n = 5000
retain_overrides = acid

[synth]
n_workers = 400
n_comments = 4000
annotations_per_worker = 20
n_wild_comments = 1000
effects = substance_user:1.5
base_logit = 0
latent_sd = 1
worker_noise_sd = 0.25
balanced_attributes = false
attention_fail_rate = 0
q_sub_no_rate = 0
always_positive_rate = 0
embedding_dim = 32
embedding_signal = 1.5
embedding_noise_sd = 0.5
write_dictionary = true

[qc]
max_annotations_per_comment = 3
max_positive_fraction = 0.95

[split]
train_frac = 0.8

[featurize]
min_doc_frac = 0.005

[model]
variants = content,content_group,full
cross_layers = 3
deep_widths = 768,768,768
lr = 1e-5
epochs = 20
joint_epochs = 5
batch_size = 32
threshold = 0.5

[baseline]
l2_c = 1e6
tolerance = 1e-8
max_iterations = 200

[jury]
variant = full
jury_size = 12
majority_threshold = 7
n_juries = 10000
thresholds =
wild_threshold = 0.9
attributes = substance_user,knows_treated_person,race_african_american,gender_female
sweep_comments = wild
wild_attribute = substance_user

[dla]
q = 0.05
min_doc_frac = 0.005
)";

pt::ptree parse_ini(std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  return tree;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError(key + ": expected " + expected + ", got '" + value + "'");
}

template <class T>
T parse_integer(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end || text.empty()) bad_value(key, text, "a non-negative integer");
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    bad_value(key, text, "a number");
  }
  if (used != text.size()) bad_value(key, text, "a number");
  return v;
}

}  // namespace

std::string Config::default_text() { return kDefaults; }

Config Config::defaults() {
  Config c;
  c.tree_ = parse_ini(kDefaults, "defaults");
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  auto c = defaults();
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError("config file not found: " + path.string());
  }
  c.merge_ini(read_text_file(path), path.string());
  return c;
}

void Config::merge_ini(std::string_view text, const std::string& origin) {
  const auto incoming = parse_ini(text, origin);
  for (const auto& [section, keys] : incoming) {
    if (!keys.data().empty()) throw ConfigError(origin + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : keys) set(section + "." + key, value.data());
  }
}

void Config::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not section.key=value");
  }
  auto key = boost::algorithm::trim_copy(std::string(assignment.substr(0, eq)));
  auto value = boost::algorithm::trim_copy(std::string(assignment.substr(eq + 1)));
  set(key, value);
}

void Config::set(const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size() ||
      key.find('.', dot + 1) != std::string::npos) {
    throw ConfigError("config key '" + key + "' is not section.key");
  }
  auto node = tree_.get_child_optional(pt::ptree::path_type(key, '.'));
  if (!node) throw ConfigError("unknown config key '" + key + "'");
  node->put_value(value);
}

std::string Config::get(const std::string& key) const {
  auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
  if (!v) throw ConfigError("unknown config key '" + key + "'");
  return *v;
}

double Config::get_double(const std::string& key) const { return parse_double(key, get(key)); }

std::uint64_t Config::get_u64(const std::string& key) const {
  return parse_integer<std::uint64_t>(key, get(key));
}

std::size_t Config::get_size(const std::string& key) const {
  return parse_integer<std::size_t>(key, get(key));
}

bool Config::get_bool(const std::string& key) const {
  const auto v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    boost::algorithm::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_list(key)) out.push_back(parse_double(key, s));
  return out;
}

std::vector<std::size_t> Config::get_size_list(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& s : get_list(key)) out.push_back(parse_integer<std::size_t>(key, s));
  return out;
}

std::string Config::to_ini() const {
  std::ostringstream out;
  pt::write_ini(out, tree_);
  return out.str();
}

}  // namespace stigma::pipeline
