#include "mgdr/encoder.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mgdr/errors.hpp"
#include "mgdr/rng.hpp"

namespace mgdr {

using json = nlohmann::json;
using ad::Mat;
using ad::NodePtr;

std::string to_string(GroupingScheme s) {
  switch (s) {
    case GroupingScheme::single: return "single";
    case GroupingScheme::granularity: return "granularity";
    case GroupingScheme::aspect: return "aspect";
    case GroupingScheme::none: return "none";
  }
  return "?";
}

GroupingScheme grouping_from_string(const std::string& s) {
  if (s == "single") return GroupingScheme::single;
  if (s == "granularity") return GroupingScheme::granularity;
  if (s == "aspect") return GroupingScheme::aspect;
  if (s == "none") return GroupingScheme::none;
  throw ValidationError("unknown grouping scheme '" + s + "'");
}

std::string to_string(ValueMode m) { return m == ValueMode::shared ? "shared" : "unshared"; }

ValueMode value_mode_from_string(const std::string& s) {
  if (s == "shared") return ValueMode::shared;
  if (s == "unshared") return ValueMode::unshared;
  throw ValidationError("unknown value mode '" + s + "'");
}

std::string to_string(ValueInit i) { return i == ValueInit::averaged ? "averaged" : "random"; }

ValueInit value_init_from_string(const std::string& s) {
  if (s == "averaged") return ValueInit::averaged;
  if (s == "random") return ValueInit::random;
  throw ValidationError("unknown value init '" + s + "'");
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::cls_gating: return "cls_gating";
    case FusionMode::no_cls_gating: return "no_cls_gating";
    case FusionMode::first_k: return "first_k";
    case FusionMode::cls_only_baseline: return "cls_only_baseline";
  }
  return "?";
}

FusionMode fusion_from_string(const std::string& s) {
  if (s == "cls_gating") return FusionMode::cls_gating;
  if (s == "no_cls_gating") return FusionMode::no_cls_gating;
  if (s == "first_k") return FusionMode::first_k;
  if (s == "cls_only_baseline") return FusionMode::cls_only_baseline;
  throw ValidationError("unknown fusion mode '" + s + "'");
}

void EncoderConfig::validate() const {
  if (hidden <= 0 || layers <= 0 || heads <= 0 || ffn <= 0 || max_seq_len < 2) {
    throw ValidationError("encoder config: dimensions must be positive (max_seq_len >= 2)");
  }
  if (hidden % heads != 0) {
    throw ValidationError("encoder config: hidden size must be divisible by heads");
  }
  if ((grouping == GroupingScheme::none) != (fusion == FusionMode::cls_only_baseline)) {
    throw ValidationError(
        "encoder config: grouping 'none' and fusion 'cls_only_baseline' imply each other");
  }
}

GuidingLayout GuidingLayout::make(GroupingScheme scheme, int n_aspects, int n_granularities) {
  if (scheme != GroupingScheme::none && (n_aspects < 1 || n_granularities < 1)) {
    throw ValidationError("guiding layout: need at least one aspect and one granularity");
  }
  GuidingLayout l;
  l.scheme = scheme;
  l.n_aspects = n_aspects;
  l.n_granularities = n_granularities;
  switch (scheme) {
    case GroupingScheme::single: l.slot_count = n_aspects * n_granularities; break;
    case GroupingScheme::granularity: l.slot_count = n_granularities; break;
    case GroupingScheme::aspect: l.slot_count = n_aspects; break;
    case GroupingScheme::none: l.slot_count = 0; break;
  }
  return l;
}

int GuidingLayout::slot_of(int aspect_idx, int gran_idx) const {
  if (aspect_idx < 0 || aspect_idx >= n_aspects || gran_idx < 0 || gran_idx >= n_granularities) {
    throw ValidationError("guiding layout: objective index out of range");
  }
  switch (scheme) {
    case GroupingScheme::single: return aspect_idx * n_granularities + gran_idx;
    case GroupingScheme::granularity: return gran_idx;
    case GroupingScheme::aspect: return aspect_idx;
    case GroupingScheme::none: break;
  }
  throw ValidationError("guiding layout: scheme 'none' has no slots");
}

const NodePtr& EncoderParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("missing parameter tensor '" + name + "'");
  return it->second;
}

NodePtr& EncoderParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValidationError("missing parameter tensor '" + name + "'");
  return it->second;
}

void EncoderParams::zero_grads() {
  for (auto& [name, t] : tensors) {
    t->ensure_grad();
    t->zero_grad();
  }
}

std::int64_t EncoderParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : tensors) n += t->value.size();
  return n;
}

namespace {

constexpr double kInitStd = 0.02;

Mat normal_mat(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
               const std::string& stream) {
  Rng rng = rng_stream(seed, "init/" + stream);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, kInitStd);
  }
  return m;
}

}  // namespace

EncoderParams init_params(const EncoderConfig& cfg, int vocab_size, const GuidingLayout& layout,
                          std::uint64_t seed) {
  cfg.validate();
  if (vocab_size <= 0) throw ValidationError("init_params: vocab_size must be positive");
  const int H = cfg.hidden, F = cfg.ffn;
  EncoderParams p;
  auto param = [&](const std::string& name, Mat m) {
    p.tensors[name] = ad::leaf(std::move(m), /*requires_grad=*/true);
  };

  param("token_embeddings", normal_mat(vocab_size, H, seed, "token_embeddings"));
  param("position_embeddings", normal_mat(cfg.max_seq_len, H, seed, "position_embeddings"));
  param("mlm_bias", Mat::Zero(1, vocab_size));

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = "layers." + std::to_string(l) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      param(base + "attn." + w, normal_mat(H, H, seed, base + "attn." + w));
    }
    for (const char* b : {"bq", "bk", "bv", "bo"}) {
      param(base + "attn." + b, Mat::Zero(1, H));
    }
    param(base + "ln1.gain", Mat::Ones(1, H));
    param(base + "ln1.bias", Mat::Zero(1, H));
    param(base + "ln2.gain", Mat::Ones(1, H));
    param(base + "ln2.bias", Mat::Zero(1, H));
    param(base + "ffn.w1", normal_mat(H, F, seed, base + "ffn.w1"));
    param(base + "ffn.b1", Mat::Zero(1, F));
    param(base + "ffn.w2", normal_mat(F, H, seed, base + "ffn.w2"));
    param(base + "ffn.b2", Mat::Zero(1, H));
  }

  const bool gated = layout.slot_count > 0 &&
                     (cfg.fusion == FusionMode::cls_gating || cfg.fusion == FusionMode::first_k);
  if (gated) {
    param("gating.weight", normal_mat(layout.slot_count, H, seed, "gating.weight"));
    param("gating.bias", Mat::Zero(1, layout.slot_count));
  }
  return p;
}

ValueTokenIndex ValueTokenIndex::build(const VocabularySet& vocabs, const Tokenizer& tok) {
  ValueTokenIndex out;
  out.groups_.resize(vocabs.n_aspects());
  for (int a = 0; a < vocabs.n_aspects(); ++a) {
    for (Granularity g : kAllGranularities) {
      const auto& vocab = vocabs.vocab(a, g);
      auto& groups = out.groups_[a][static_cast<int>(g)];
      groups.reserve(vocab.values.size());
      for (const auto& value : vocab.values) {
        groups.push_back(value_token_ids(value, g, tok));
      }
    }
  }
  return out;
}

const std::vector<std::vector<int>>& ValueTokenIndex::groups(int aspect_idx, Granularity g) const {
  if (aspect_idx < 0 || aspect_idx >= static_cast<int>(groups_.size())) {
    throw ValidationError("value token index: aspect out of range");
  }
  return groups_[aspect_idx][static_cast<int>(g)];
}

void init_value_tables(EncoderParams& params, const VocabularySet& vocabs,
                       const ValueTokenIndex& vindex, ValueMode mode, ValueInit init,
                       const std::vector<int>& active_aspects,
                       const std::vector<Granularity>& active_granularities,
                       std::uint64_t seed) {
  if (mode == ValueMode::shared) return;  // computed live from token embeddings
  const Mat& tokens = params.at("token_embeddings")->value;
  const Eigen::Index H = tokens.cols();
  for (int a : active_aspects) {
    const std::string& aspect = vocabs.schema().aspects[a].name;
    for (Granularity g : active_granularities) {
      const auto& groups = vindex.groups(a, g);
      const std::string name = "values." + aspect + "." + to_string(g);
      Mat table(static_cast<Eigen::Index>(groups.size()), H);
      if (init == ValueInit::averaged) {
        for (std::size_t v = 0; v < groups.size(); ++v) {
          Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(H);
          for (int id : groups[v]) acc += tokens.row(id);
          table.row(static_cast<Eigen::Index>(v)) = acc / static_cast<double>(groups[v].size());
        }
      } else {
        table = normal_mat(table.rows(), H, seed, name);
      }
      params.tensors[name] = ad::leaf(std::move(table), /*requires_grad=*/true);
    }
  }
}

std::vector<int> frame_ids(const EncoderConfig& cfg, const GuidingLayout& layout,
                           std::span<const int> content_ids) {
  std::vector<int> framed;
  const int guides = cfg.inserts_guides() ? layout.slot_count : 0;
  framed.reserve(1 + guides + content_ids.size());
  framed.push_back(Tokenizer::kClsId);
  for (int k = 0; k < guides; ++k) framed.push_back(Tokenizer::kFirstGuideId + k);
  framed.insert(framed.end(), content_ids.begin(), content_ids.end());
  return framed;
}

EncodedSequence encode_framed(const EncoderParams& params, const EncoderConfig& cfg,
                              const GuidingLayout& layout, std::span<const int> framed_ids) {
  const int L = static_cast<int>(framed_ids.size());
  if (L > cfg.max_seq_len) {
    throw ValidationError("sequence too long: " + std::to_string(L) + " > max " +
                          std::to_string(cfg.max_seq_len));
  }
  const int inserted = cfg.inserts_guides() ? layout.slot_count : 0;
  const int content_len = L - 1 - inserted;
  if (content_len < 0) throw ValidationError("framed sequence shorter than its frame");
  if (cfg.fusion == FusionMode::first_k && content_len < layout.slot_count) {
    throw ValidationError("first_k fusion needs at least " + std::to_string(layout.slot_count) +
                          " content tokens, got " + std::to_string(content_len));
  }

  std::vector<int> ids(framed_ids.begin(), framed_ids.end());
  std::vector<int> positions(ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);

  NodePtr x = ad::add(ad::rows(params.at("token_embeddings"), std::move(ids)),
                      ad::rows(params.at("position_embeddings"), std::move(positions)));

  const int dh = cfg.hidden / cfg.heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = "layers." + std::to_string(l) + ".";
    NodePtr q = ad::add_rowvec(ad::matmul(x, params.at(base + "attn.wq")), params.at(base + "attn.bq"));
    NodePtr k = ad::add_rowvec(ad::matmul(x, params.at(base + "attn.wk")), params.at(base + "attn.bk"));
    NodePtr v = ad::add_rowvec(ad::matmul(x, params.at(base + "attn.wv")), params.at(base + "attn.bv"));
    std::vector<NodePtr> head_outs;
    head_outs.reserve(cfg.heads);
    for (int h = 0; h < cfg.heads; ++h) {
      NodePtr qh = ad::slice_cols(q, h * dh, dh);
      NodePtr kh = ad::slice_cols(k, h * dh, dh);
      NodePtr vh = ad::slice_cols(v, h * dh, dh);
      NodePtr scores = ad::scale(ad::matmul_nt(qh, kh), att_scale);
      NodePtr probs = ad::softmax_rows(scores);  // full attention, no masking
      head_outs.push_back(ad::matmul(probs, vh));
    }
    NodePtr attn = ad::add_rowvec(
        ad::matmul(ad::concat_cols(head_outs), params.at(base + "attn.wo")),
        params.at(base + "attn.bo"));
    x = ad::layer_norm(ad::add(x, attn), params.at(base + "ln1.gain"), params.at(base + "ln1.bias"));
    NodePtr f = ad::gelu(ad::add_rowvec(ad::matmul(x, params.at(base + "ffn.w1")),
                                        params.at(base + "ffn.b1")));
    NodePtr f2 = ad::add_rowvec(ad::matmul(f, params.at(base + "ffn.w2")),
                                params.at(base + "ffn.b2"));
    x = ad::layer_norm(ad::add(x, f2), params.at(base + "ln2.gain"), params.at(base + "ln2.bias"));
  }

  if (!x->value.allFinite()) {
    throw DivergenceError("non-finite activation in encoder forward pass");
  }

  EncodedSequence out;
  out.hidden = x;
  out.slot_count = layout.slot_count;
  out.content_start = 1 + inserted;
  out.content_len = content_len;
  return out;
}

EncodedSequence encode(const EncoderParams& params, const EncoderConfig& cfg,
                       const GuidingLayout& layout, std::span<const int> content_ids) {
  const std::vector<int> framed = frame_ids(cfg, layout, content_ids);
  return encode_framed(params, cfg, layout, framed);
}

ad::NodePtr value_matrix(const EncoderParams& params, const EncoderConfig& cfg,
                         const VocabularySet& vocabs, const ValueTokenIndex& vindex,
                         int aspect_idx, Granularity g) {
  if (cfg.value_mode == ValueMode::shared) {
    return ad::mean_pooled_rows(params.at("token_embeddings"), vindex.groups(aspect_idx, g));
  }
  const std::string name =
      "values." + vocabs.schema().aspects[aspect_idx].name + "." + to_string(g);
  return params.at(name);
}

ad::NodePtr value_embedding(const EncoderParams& params, const EncoderConfig& cfg,
                            const VocabularySet& vocabs, const ValueTokenIndex& vindex,
                            int aspect_idx, Granularity g, int value_idx) {
  const auto& groups = vindex.groups(aspect_idx, g);
  if (value_idx < 0 || value_idx >= static_cast<int>(groups.size())) {
    throw ValidationError("value index out of range");
  }
  if (cfg.value_mode == ValueMode::shared) {
    return ad::mean_pooled_rows(params.at("token_embeddings"), {groups[value_idx]});
  }
  const std::string name =
      "values." + vocabs.schema().aspects[aspect_idx].name + "." + to_string(g);
  return ad::rows(params.at(name), {value_idx});
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'G', 'D', 'R', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint truncated");
  return v;
}

json config_to_json(const EncoderConfig& c, const GuidingLayout& l,
                    const std::vector<std::string>& aspects,
                    const std::vector<Granularity>& grans) {
  json ga = json::array();
  for (Granularity g : grans) ga.push_back(to_string(g));
  return json{{"hidden", c.hidden},
              {"layers", c.layers},
              {"heads", c.heads},
              {"ffn", c.ffn},
              {"max_seq_len", c.max_seq_len},
              {"grouping", to_string(c.grouping)},
              {"value_mode", to_string(c.value_mode)},
              {"value_init", to_string(c.value_init)},
              {"fusion", to_string(c.fusion)},
              {"n_aspects", l.n_aspects},
              {"n_granularities", l.n_granularities},
              {"active_aspects", aspects},
              {"active_granularities", ga}};
}

}  // namespace

void save_checkpoint(const std::string& path, const EncoderConfig& cfg,
                     const GuidingLayout& layout,
                     const std::vector<std::string>& active_aspect_names,
                     const std::vector<Granularity>& active_granularities,
                     const EncoderParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  const std::string meta =
      config_to_json(cfg, layout, active_aspect_names, active_granularities).dump();
  write_pod(out, static_cast<std::uint64_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_pod(out, static_cast<std::uint64_t>(params.tensors.size()));
  for (const auto& [name, node] : params.tensors) {  // std::map: sorted, stable
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint64_t>(node->value.rows()));
    write_pod(out, static_cast<std::uint64_t>(node->value.cols()));
    // Eigen default storage is column-major; dump raw for bit-exactness
    out.write(reinterpret_cast<const char*>(node->value.data()),
              static_cast<std::streamsize>(sizeof(double) * node->value.size()));
  }
  if (!out) throw IoError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path);
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_len = read_pod<std::uint64_t>(in);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw IoError("checkpoint truncated: " + path);

  Checkpoint ck;
  try {
    const json j = json::parse(meta);
    ck.config.hidden = j.at("hidden").get<int>();
    ck.config.layers = j.at("layers").get<int>();
    ck.config.heads = j.at("heads").get<int>();
    ck.config.ffn = j.at("ffn").get<int>();
    ck.config.max_seq_len = j.at("max_seq_len").get<int>();
    ck.config.grouping = grouping_from_string(j.at("grouping").get<std::string>());
    ck.config.value_mode = value_mode_from_string(j.at("value_mode").get<std::string>());
    ck.config.value_init = value_init_from_string(j.at("value_init").get<std::string>());
    ck.config.fusion = fusion_from_string(j.at("fusion").get<std::string>());
    ck.layout = GuidingLayout::make(ck.config.grouping, j.at("n_aspects").get<int>(),
                                    j.at("n_granularities").get<int>());
    ck.active_aspect_names = j.at("active_aspects").get<std::vector<std::string>>();
    for (const auto& g : j.at("active_granularities")) {
      ck.active_granularities.push_back(granularity_from_string(g.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("bad checkpoint metadata: ") + e.what());
  }

  const auto count = read_pod<std::uint64_t>(in);
  for (std::uint64_t t = 0; t < count; ++t) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!in) throw IoError("checkpoint truncated in tensor '" + name + "'");
    ck.params.tensors[name] = ad::leaf(std::move(m), /*requires_grad=*/true);
  }
  return ck;
}

}  // namespace mgdr
