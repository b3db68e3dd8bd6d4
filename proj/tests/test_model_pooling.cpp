#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "denc/model.hpp"
#include "denc/pooling.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "json.hpp"

using denc::DocEntity;
using denc::DocumentRecord;
using denc::DualEncoderModel;
using denc::EncoderConfig;
using denc::ParamMap;
using denc::TensorD;
using denc::TensorF;
using denc::Val;
using denc::Vocab;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.num_layers = 1;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.ffn_dim = 16;
  cfg.output_dim = 4;
  cfg.max_len_query = 8;
  cfg.max_len_doc = 12;
  cfg.vocab_size = 40;
  return cfg;
}

// Real tokenizer output needs the byte token range covered.
EncoderConfig byte_vocab_config() {
  EncoderConfig cfg = tiny_config();
  cfg.vocab_size = 260;
  return cfg;
}

std::filesystem::path temp_file(const char* stem) {
  return std::filesystem::temp_directory_path() /
         (std::string(stem) + "-" + std::to_string(::getpid()) + ".bin");
}

bool same_tensor(const TensorF& a, const TensorF& b) {
  return a.shape == b.shape && a.data == b.data;
}

TensorF unit_row(std::vector<float> v) {
  double n = 0.0;
  for (float x : v) n += static_cast<double>(x) * x;
  n = std::sqrt(n);
  for (float& x : v) x = static_cast<float>(x / n);
  return TensorF::vec(std::move(v));
}

// Independent double-precision walk of the scoring net and pooling.
std::vector<double> oracle_weights(const std::vector<double>& q,
                                   const std::vector<std::vector<double>>& ents,
                                   const std::vector<double>& w1, const std::vector<double>& b1,
                                   const std::vector<double>& w2, int64_t hidden) {
  const int64_t m_dim = static_cast<int64_t>(q.size());
  std::vector<double> scores;
  for (const auto& e : ents) {
    std::vector<double> x = q;
    x.insert(x.end(), e.begin(), e.end());
    double s = 0.0;
    for (int64_t j = 0; j < hidden; ++j) {
      double z = b1[static_cast<size_t>(j)];
      for (int64_t i = 0; i < 2 * m_dim; ++i) {
        z += x[static_cast<size_t>(i)] * w1[static_cast<size_t>(i * hidden + j)];
      }
      s += std::tanh(z) * w2[static_cast<size_t>(j)];
    }
    scores.push_back(s);
  }
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double denom = 0.0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    denom += s;
  }
  for (double& s : scores) s /= denom;
  return scores;
}

std::vector<double> oracle_pooled(const std::vector<double>& alpha,
                                  const std::vector<std::vector<double>>& ents) {
  std::vector<double> out(ents[0].size(), 0.0);
  for (size_t k = 0; k < ents.size(); ++k) {
    for (size_t i = 0; i < out.size(); ++i) out[i] += alpha[k] * ents[k][i];
  }
  double n = 0.0;
  for (double v : out) n += v * v;
  n = std::max(std::sqrt(n), 1e-12);
  for (double& v : out) v /= n;
  return out;
}

}  // namespace

TEST_SUITE("model_pooling") {

TEST_CASE("model init is deterministic and towers draw distinct streams") {
  EncoderConfig cfg = tiny_config();
  DualEncoderModel a = denc::init_model(cfg, 7, /*with_attention=*/false);
  DualEncoderModel b = denc::init_model(cfg, 7, /*with_attention=*/false);
  REQUIRE(a.params.size() == b.params.size());
  for (const auto& [name, t] : a.params) {
    CHECK(same_tensor(t, b.params.at(name)));
    CHECK(name.rfind("q.", 0) == 0);
  }
  CHECK_FALSE(a.has_attention());

  DualEncoderModel c = denc::init_model(cfg, 8, /*with_attention=*/false);
  CHECK_FALSE(same_tensor(a.params.at("q.tok_emb"), c.params.at("q.tok_emb")));

  EncoderConfig sep = cfg;
  sep.shared_weights = false;
  DualEncoderModel d = denc::init_model(sep, 7, /*with_attention=*/true, /*attn_hidden=*/8);
  CHECK(d.params.count("d.tok_emb") == 1);
  CHECK_FALSE(same_tensor(d.params.at("q.tok_emb"), d.params.at("d.tok_emb")));
  CHECK(d.has_attention());
  CHECK(d.params.at("attn.w1").shape == std::vector<int64_t>{2 * cfg.output_dim, 8});
  CHECK(d.params.at("attn.b1").shape == std::vector<int64_t>{1, 8});
  CHECK(d.params.at("attn.w2").shape == std::vector<int64_t>{8, 1});

  ParamMap attn = d.attention_net();
  CHECK(attn.size() == 3);
  CHECK(attn.count("w1") == 1);
  ParamMap qt = a.query_tower();
  CHECK(qt.count("tok_emb") == 1);
  CHECK(a.doc_prefix() == "q.");
  CHECK(d.doc_prefix() == "d.");
}

TEST_CASE("model save and load restore every tensor bit-exactly") {
  EncoderConfig cfg = tiny_config();
  cfg.shared_weights = false;
  DualEncoderModel m = denc::init_model(cfg, 11, /*with_attention=*/true, /*attn_hidden=*/8);
  m.vocab_path = "vocab.denc";
  auto path = temp_file("model-roundtrip");
  denc::save_model(path.string(), m);

  DualEncoderModel r = denc::load_model(path.string());
  CHECK(r.config.num_layers == cfg.num_layers);
  CHECK(r.config.model_dim == cfg.model_dim);
  CHECK(r.config.num_heads == cfg.num_heads);
  CHECK(r.config.ffn_dim == cfg.ffn_dim);
  CHECK(r.config.output_dim == cfg.output_dim);
  CHECK(r.config.max_len_query == cfg.max_len_query);
  CHECK(r.config.max_len_doc == cfg.max_len_doc);
  CHECK(r.config.vocab_size == cfg.vocab_size);
  CHECK(r.config.shared_weights == cfg.shared_weights);
  CHECK(r.attn_hidden == 8);
  CHECK(r.vocab_path == "vocab.denc");
  REQUIRE(r.params.size() == m.params.size());
  for (const auto& [name, t] : m.params) CHECK(same_tensor(t, r.params.at(name)));
  CHECK(denc::params_hash(r.params) == denc::params_hash(m.params));

  auto sidecar = path;
  sidecar += ".json";
  REQUIRE(std::filesystem::exists(sidecar));
  std::ifstream is(sidecar);
  nlohmann::json j = nlohmann::json::parse(is);
  CHECK(j.at("format").get<std::string>() == "dual-encoder");
  CHECK(j.at("output_dim").get<int64_t>() == cfg.output_dim);
  CHECK(j.at("shared_weights").get<bool>() == false);
  CHECK(j.at("vocab_path").get<std::string>() == "vocab.denc");

  std::filesystem::remove(path);
  std::filesystem::remove(sidecar);
}

TEST_CASE("model loader rejects foreign and malformed checkpoints") {
  CHECK_THROWS_AS(denc::load_model("/nonexistent/model.denc"), std::runtime_error);

  auto path = temp_file("model-bad");
  ParamMap p;
  p.emplace("q.tok_emb", TensorF({2, 2}, 1.0f));

  denc::save_params(path.string(), p, "{}");
  CHECK_THROWS_WITH_AS(denc::load_model(path.string()),
                       doctest::Contains("metadata missing field"), std::runtime_error);

  denc::save_params(path.string(), p, "not json");
  CHECK_THROWS_WITH_AS(denc::load_model(path.string()), doctest::Contains("bad metadata JSON"),
                       std::runtime_error);

  DualEncoderModel ok = denc::init_model(tiny_config(), 1, false);
  denc::save_model(path.string(), ok);
  nlohmann::json meta;
  {
    std::ifstream is(path.string() + ".json");
    meta = nlohmann::json::parse(is);
  }

  ParamMap stray = ok.params;
  stray.emplace("x.foo", TensorF({1}, 0.0f));
  denc::save_params(path.string(), stray, meta.dump());
  CHECK_THROWS_WITH_AS(denc::load_model(path.string()),
                       doctest::Contains("unexpected parameter name"), std::runtime_error);

  ParamMap with_doc = ok.params;
  with_doc.emplace("d.tok_emb", TensorF({2, 2}, 1.0f));
  denc::save_params(path.string(), with_doc, meta.dump());
  CHECK_THROWS_WITH_AS(denc::load_model(path.string()),
                       doctest::Contains("shared weights declared"), std::runtime_error);

  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}

TEST_CASE("document tower hash tracks only document-side weights") {
  EncoderConfig cfg = tiny_config();
  DualEncoderModel shared = denc::init_model(cfg, 5, /*with_attention=*/true);
  const uint64_t h0 = denc::doc_params_hash(shared);
  CHECK(h0 == denc::params_hash(shared.query_tower()));

  shared.params.at("attn.w2").data[0] += 1.0f;
  CHECK(denc::doc_params_hash(shared) == h0);
  shared.params.at("q.tok_emb").data[0] += 1.0f;
  CHECK(denc::doc_params_hash(shared) != h0);

  EncoderConfig sep = cfg;
  sep.shared_weights = false;
  DualEncoderModel two = denc::init_model(sep, 5, false);
  const uint64_t h1 = denc::doc_params_hash(two);
  two.params.at("q.tok_emb").data[0] += 1.0f;
  CHECK(denc::doc_params_hash(two) == h1);
  two.params.at("d.tok_emb").data[0] += 1.0f;
  CHECK(denc::doc_params_hash(two) != h1);

  // A distilled deployment keeps the teacher's document tower, so its index
  // hash must match the teacher's.
  DualEncoderModel teacher = denc::init_model(cfg, 9, false);
  DualEncoderModel student;
  student.config = sep;
  for (const auto& [name, t] : denc::init_encoder_params(cfg, 77)) {
    student.params.emplace(std::string("q.") + name, t);
  }
  for (const auto& [name, t] : teacher.query_tower()) {
    student.params.emplace(std::string("d.") + name, t);
  }
  CHECK(denc::doc_params_hash(student) == denc::doc_params_hash(teacher));
}

TEST_CASE("bind_tower strips prefixes and collect_grads restores them") {
  std::map<std::string, TensorD> params;
  params.emplace("q.a", TensorD({1, 2}, std::vector<double>{2.0, 3.0}));
  params.emplace("q.b", TensorD({1, 2}, std::vector<double>{4.0, 5.0}));
  params.emplace("d.a", TensorD({1, 2}, std::vector<double>{9.0, 9.0}));

  denc::TapeD t;
  denc::BoundParams<double> bound = denc::bind_tower(t, params, "q.", /*requires_grad=*/true);
  REQUIRE(bound.leaves.size() == 2);
  Val loss = t.sum(t.mul(bound.at("a"), bound.at("b")));
  t.backward(loss);

  std::map<std::string, TensorD> grads;
  denc::collect_grads(t, bound, "q.", grads);
  REQUIRE(grads.size() == 2);
  CHECK(grads.at("q.a").data == std::vector<double>{4.0, 5.0});
  CHECK(grads.at("q.b").data == std::vector<double>{2.0, 3.0});
  CHECK(grads.count("d.a") == 0);
}

TEST_CASE("entity kinds and pooling names roundtrip") {
  using denc::EntityKind;
  for (EntityKind k : {EntityKind::title, EntityKind::description, EntityKind::url,
                       EntityKind::caption, EntityKind::other}) {
    CHECK(denc::parse_entity_kind(denc::to_string(k)) == k);
  }
  CHECK_THROWS_AS(denc::parse_entity_kind("body"), std::runtime_error);
  CHECK(denc::parse_pooling("concat") == denc::DocPooling::concat);
  CHECK(denc::parse_pooling("attention") == denc::DocPooling::attention);
  CHECK(denc::to_string(denc::DocPooling::attention) == "attention");
  CHECK_THROWS_AS(denc::parse_pooling("mean"), std::runtime_error);
}

TEST_CASE("document validation enforces the entity count") {
  DocumentRecord doc;
  doc.id = "doc-1";
  CHECK_THROWS_WITH_AS(denc::validate_document(doc), doctest::Contains("no entities"),
                       std::runtime_error);
  for (int i = 0; i < 4; ++i) {
    doc.entities.push_back({denc::EntityKind::other, "t"});
    CHECK_NOTHROW(denc::validate_document(doc));
  }
  doc.entities.push_back({denc::EntityKind::other, "t"});
  CHECK_THROWS_WITH_AS(denc::validate_document(doc), doctest::Contains("exceeds the limit"),
                       std::runtime_error);
}

TEST_CASE("concatenation places separator tokens between entities") {
  CHECK(denc::separator_token() == Vocab::byte_token(0x1e));
  DocumentRecord doc;
  doc.id = "d";
  doc.entities = {{denc::EntityKind::title, "ab"}, {denc::EntityKind::url, "cd"}};
  CHECK(denc::concat_entities(doc) == std::string("ab\x1e") + "cd");

  Vocab v;
  denc::TokenSequence seq = denc::doc_tokens_concat(v, doc, 16);
  std::vector<int> want = {Vocab::kBos,
                           Vocab::byte_token('a'),
                           Vocab::byte_token('b'),
                           denc::separator_token(),
                           Vocab::byte_token('c'),
                           Vocab::byte_token('d'),
                           Vocab::kEos};
  REQUIRE(seq.true_length == static_cast<int64_t>(want.size()));
  for (size_t i = 0; i < want.size(); ++i) CHECK(seq.ids[i] == want[i]);
}

TEST_CASE("single-entity concat embedding equals plain encode") {
  EncoderConfig cfg = byte_vocab_config();
  ParamMap params = denc::init_encoder_params(cfg, 3);
  Vocab v;
  DocumentRecord doc;
  doc.id = "d";
  doc.entities = {{denc::EntityKind::title, "hi there"}};
  TensorF via_doc = denc::embed_document_concat(params, cfg, v, doc);
  TensorF direct = denc::encode_text(params, cfg, denc::encode("hi there", v, cfg.max_len_doc, true));
  CHECK(same_tensor(via_doc, direct));
}

TEST_CASE("entity order changes the concat embedding") {
  EncoderConfig cfg = byte_vocab_config();
  ParamMap params = denc::init_encoder_params(cfg, 3);
  Vocab v;
  DocumentRecord ab, ba;
  ab.id = ba.id = "d";
  ab.entities = {{denc::EntityKind::title, "cat"}, {denc::EntityKind::url, "dog"}};
  ba.entities = {{denc::EntityKind::url, "dog"}, {denc::EntityKind::title, "cat"}};
  TensorF e1 = denc::embed_document_concat(params, cfg, v, ab);
  TensorF e2 = denc::embed_document_concat(params, cfg, v, ba);
  float max_diff = 0.0f;
  for (int64_t i = 0; i < e1.numel(); ++i) max_diff = std::max(max_diff, std::fabs(e1.at(i) - e2.at(i)));
  CHECK(max_diff > 1e-6f);
}

TEST_CASE("a window-filling leading entity makes trailing entities irrelevant") {
  EncoderConfig cfg = byte_vocab_config();
  ParamMap params = denc::init_encoder_params(cfg, 3);
  Vocab v;
  // 12-token window; the title alone already overflows it.
  const std::string title = "aaaa bbbb cccc dddd";
  DocumentRecord alone, padded;
  alone.id = padded.id = "d";
  alone.entities = {{denc::EntityKind::title, title}};
  padded.entities = {{denc::EntityKind::title, title}, {denc::EntityKind::url, "zzz"}};
  TensorF e1 = denc::embed_document_concat(params, cfg, v, alone);
  TensorF e2 = denc::embed_document_concat(params, cfg, v, padded);
  CHECK(same_tensor(e1, e2));
}

TEST_CASE("attention weights form a probability vector") {
  ParamMap attn = denc::init_attention_params(4, 8, 21);
  denc::Rng rng(77);
  for (int m = 1; m <= 4; ++m) {
    std::vector<TensorF> ents;
    for (int k = 0; k < m; ++k) {
      std::vector<float> raw;
      for (int i = 0; i < 4; ++i) raw.push_back(static_cast<float>(rng.next_normal()));
      ents.push_back(unit_row(raw));
    }
    TensorF q = unit_row({0.5f, -0.5f, 0.5f, 0.5f});
    std::vector<float> alpha = denc::attention_weights(q, ents, attn);
    REQUIRE(static_cast<int>(alpha.size()) == m);
    double sum = 0.0;
    for (float a : alpha) {
      CHECK(a > 0.0f);
      CHECK(a < 1.0f + 1e-7f);
      sum += a;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    if (m == 1) CHECK(alpha[0] == 1.0f);
  }
}

TEST_CASE("identical entities get uniform weights") {
  ParamMap attn = denc::init_attention_params(4, 8, 22);
  TensorF e = unit_row({1.0f, 2.0f, -1.0f, 0.5f});
  TensorF q = unit_row({0.0f, 1.0f, 0.0f, 0.0f});
  std::vector<float> alpha = denc::attention_weights(q, {e, e, e}, attn);
  for (float a : alpha) CHECK(a == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("hand-built scoring net reproduces softmax arithmetic") {
  // Net wired so entity scores come out as (0, ln 3).
  ParamMap attn;
  attn.emplace("w1", TensorF({4, 1}, std::vector<float>{0.0f, 0.0f, 1.0f, 0.0f}));
  attn.emplace("b1", TensorF({1, 1}, std::vector<float>{0.0f}));
  attn.emplace("w2",
               TensorF({1, 1}, std::vector<float>{static_cast<float>(std::log(3.0) /
                                                                     std::tanh(1.0))}));
  TensorF q = TensorF::vec({0.0f, 1.0f});
  TensorF e1 = TensorF::vec({0.0f, 1.0f});
  TensorF e2 = TensorF::vec({1.0f, 0.0f});
  std::vector<float> alpha = denc::attention_weights(q, {e1, e2}, attn);
  REQUIRE(alpha.size() == 2);
  CHECK(alpha[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(alpha[1] == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("attention weight shape errors are reported") {
  ParamMap attn = denc::init_attention_params(4, 8, 23);
  TensorF q = unit_row({1.0f, 0.0f, 0.0f, 0.0f});
  CHECK_THROWS_AS(denc::attention_weights(q, {}, attn), std::runtime_error);
  TensorF wrong = unit_row({1.0f, 0.0f});
  CHECK_THROWS_WITH_AS(denc::attention_weights(q, {wrong}, attn),
                       doctest::Contains("entity embedding dim"), std::runtime_error);
  ParamMap missing = attn;
  missing.erase("w2");
  CHECK_THROWS_WITH_AS(denc::attention_weights(q, {q}, missing),
                       doctest::Contains("missing parameter"), std::runtime_error);
}

TEST_CASE("attention pooling matches a hand arithmetic oracle") {
  EncoderConfig cfg = byte_vocab_config();
  ParamMap params = denc::init_encoder_params(cfg, 13);
  ParamMap attn = denc::init_attention_params(cfg.output_dim, 8, 31);
  Vocab v;
  DocumentRecord doc;
  doc.id = "d";
  doc.entities = {{denc::EntityKind::title, "red fox"},
                  {denc::EntityKind::description, "jumps high"},
                  {denc::EntityKind::url, "zz9"}};
  TensorF q_emb = denc::encode_text(params, cfg, denc::encode("fox", v, cfg.max_len_query, true));

  TensorF got = denc::embed_document_attention(params, cfg, v, attn, q_emb, doc);

  std::vector<std::vector<double>> ents;
  for (const DocEntity& e : doc.entities) {
    TensorF emb = denc::encode_text(params, cfg, denc::encode(e.text, v, cfg.max_len_doc, true));
    ents.emplace_back(emb.data.begin(), emb.data.end());
  }
  std::vector<double> qd(q_emb.data.begin(), q_emb.data.end());
  const TensorF& w1 = attn.at("w1");
  const TensorF& b1 = attn.at("b1");
  const TensorF& w2 = attn.at("w2");
  std::vector<double> alpha = oracle_weights(
      qd, ents, std::vector<double>(w1.data.begin(), w1.data.end()),
      std::vector<double>(b1.data.begin(), b1.data.end()),
      std::vector<double>(w2.data.begin(), w2.data.end()), 8);
  std::vector<double> want = oracle_pooled(alpha, ents);

  REQUIRE(got.numel() == cfg.output_dim);
  double norm = 0.0;
  for (int64_t i = 0; i < got.numel(); ++i) {
    CHECK(got.at(i) == doctest::Approx(want[static_cast<size_t>(i)]).epsilon(1e-5));
    norm += static_cast<double>(got.at(i)) * got.at(i);
  }
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("single-entity attention pooling returns that entity's embedding") {
  EncoderConfig cfg = byte_vocab_config();
  ParamMap params = denc::init_encoder_params(cfg, 13);
  ParamMap attn = denc::init_attention_params(cfg.output_dim, 8, 31);
  Vocab v;
  DocumentRecord doc;
  doc.id = "d";
  doc.entities = {{denc::EntityKind::title, "only one"}};
  TensorF q_emb = denc::encode_text(params, cfg, denc::encode("q", v, cfg.max_len_query, true));
  TensorF pooled = denc::embed_document_attention(params, cfg, v, attn, q_emb, doc);
  TensorF direct =
      denc::encode_text(params, cfg, denc::encode("only one", v, cfg.max_len_doc, true));
  for (int64_t i = 0; i < pooled.numel(); ++i) {
    CHECK(pooled.at(i) == doctest::Approx(direct.at(i)).epsilon(1e-6));
  }
}

TEST_CASE("attention pooling is permutation-equivariant in entities") {
  EncoderConfig cfg = byte_vocab_config();
  ParamMap params = denc::init_encoder_params(cfg, 13);
  ParamMap attn = denc::init_attention_params(cfg.output_dim, 8, 31);
  Vocab v;
  DocumentRecord doc, perm;
  doc.id = perm.id = "d";
  doc.entities = {{denc::EntityKind::title, "alpha"},
                  {denc::EntityKind::description, "beta"},
                  {denc::EntityKind::url, "gamma"}};
  perm.entities = {doc.entities[2], doc.entities[0], doc.entities[1]};
  TensorF q_emb = denc::encode_text(params, cfg, denc::encode("ab", v, cfg.max_len_query, true));

  std::vector<TensorF> embs, perm_embs;
  for (const DocEntity& e : doc.entities) {
    embs.push_back(denc::encode_text(params, cfg, denc::encode(e.text, v, cfg.max_len_doc, true)));
  }
  perm_embs = {embs[2], embs[0], embs[1]};
  std::vector<float> a0 = denc::attention_weights(q_emb, embs, attn);
  std::vector<float> a1 = denc::attention_weights(q_emb, perm_embs, attn);
  CHECK(a1[0] == doctest::Approx(a0[2]).epsilon(1e-9));
  CHECK(a1[1] == doctest::Approx(a0[0]).epsilon(1e-9));
  CHECK(a1[2] == doctest::Approx(a0[1]).epsilon(1e-9));

  TensorF p0 = denc::embed_document_attention(params, cfg, v, attn, q_emb, doc);
  TensorF p1 = denc::embed_document_attention(params, cfg, v, attn, q_emb, perm);
  for (int64_t i = 0; i < p0.numel(); ++i) {
    CHECK(p0.at(i) == doctest::Approx(p1.at(i)).epsilon(1e-6));
  }
}

TEST_CASE("tape attention pooling agrees with the numeric path") {
  const int64_t m_dim = 4, hidden = 8;
  ParamMap attn_f = denc::init_attention_params(m_dim, hidden, 41);
  std::map<std::string, TensorD> attn_d;
  for (const auto& [name, t] : attn_f) attn_d.emplace(name, t.cast<double>());

  denc::Rng rng(55);
  auto random_unit = [&]() {
    std::vector<double> v;
    double n = 0.0;
    for (int64_t i = 0; i < m_dim; ++i) {
      v.push_back(rng.next_normal());
      n += v.back() * v.back();
    }
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
  };
  std::vector<double> q = random_unit();
  std::vector<std::vector<double>> ents = {random_unit(), random_unit(), random_unit()};

  denc::TapeD t;
  denc::BoundParams<double> bound = denc::bind_params(t, attn_d, /*requires_grad=*/false);
  Val qv = t.leaf(TensorD({1, m_dim}, q));
  std::vector<Val> evs;
  for (const auto& e : ents) evs.push_back(t.leaf(TensorD({1, m_dim}, e)));
  denc::AttentionPoolNodes nodes = denc::attention_pool_node(t, bound, qv, evs);

  std::vector<double> alpha = oracle_weights(
      q, ents, std::vector<double>(attn_d.at("w1").data.begin(), attn_d.at("w1").data.end()),
      std::vector<double>(attn_d.at("b1").data.begin(), attn_d.at("b1").data.end()),
      std::vector<double>(attn_d.at("w2").data.begin(), attn_d.at("w2").data.end()), hidden);
  std::vector<double> want = oracle_pooled(alpha, ents);

  const TensorD& got_alpha = t.value(nodes.weights);
  const TensorD& got = t.value(nodes.pooled);
  for (size_t k = 0; k < alpha.size(); ++k) {
    CHECK(got_alpha.data[k] == doctest::Approx(alpha[k]).epsilon(1e-12));
  }
  for (size_t i = 0; i < want.size(); ++i) {
    CHECK(got.data[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("gradients flow through attention pooling into the scoring net") {
  const int64_t m_dim = 3, hidden = 4, m = 3;
  ParamMap attn_f = denc::init_attention_params(m_dim, hidden, 47);
  std::map<std::string, TensorD> attn_d;
  for (const auto& [name, t] : attn_f) attn_d.emplace(name, t.cast<double>());

  // Entities share a positive first coordinate so the pooled sum cannot
  // approach the zero vector.
  std::vector<std::vector<double>> ents = {
      {0.8, 0.6, 0.0}, {0.9, 0.0, std::sqrt(1.0 - 0.81)}, {0.7, -0.5, std::sqrt(0.26)}};
  std::vector<double> q = {0.6, 0.8, 0.0};
  std::vector<double> probe = {0.3, -1.1, 0.7};

  // Layout: w1 (2M*H), b1 (H), w2 (H), then q (M), then entities (m*M).
  std::vector<double> x0;
  auto append = [&](const TensorD& t) { x0.insert(x0.end(), t.data.begin(), t.data.end()); };
  append(attn_d.at("w1"));
  append(attn_d.at("b1"));
  append(attn_d.at("w2"));
  x0.insert(x0.end(), q.begin(), q.end());
  for (const auto& e : ents) x0.insert(x0.end(), e.begin(), e.end());

  struct Built {
    Val loss;
    std::vector<Val> leaves;
  };
  auto build = [&](denc::TapeD& t, const std::vector<double>& x) {
    size_t off = 0;
    auto take = [&](std::vector<int64_t> shape) {
      int64_t n = 1;
      for (int64_t d : shape) n *= d;
      TensorD tt(shape, std::vector<double>(x.begin() + static_cast<int64_t>(off),
                                            x.begin() + static_cast<int64_t>(off) + n));
      off += static_cast<size_t>(n);
      return t.leaf(std::move(tt), true);
    };
    Built b;
    denc::BoundParams<double> bound;
    bound.leaves.emplace("w1", take({2 * m_dim, hidden}));
    bound.leaves.emplace("b1", take({1, hidden}));
    bound.leaves.emplace("w2", take({hidden, 1}));
    Val qv = take({1, m_dim});
    std::vector<Val> evs;
    for (int k = 0; k < m; ++k) evs.push_back(take({1, m_dim}));
    b.leaves = {bound.at("w1"), bound.at("b1"), bound.at("w2"), qv};
    b.leaves.insert(b.leaves.end(), evs.begin(), evs.end());
    Val pooled = denc::attention_pool_node(t, bound, qv, evs).pooled;
    Val pv = t.leaf(TensorD({m_dim, 1}, probe));
    b.loss = t.matmul(pooled, pv);
    return b;
  };

  auto f = [&](const std::vector<double>& x) {
    denc::TapeD t;
    return t.value(build(t, x).loss).data[0];
  };
  std::vector<double> analytic;
  {
    denc::TapeD t;
    Built b = build(t, x0);
    t.backward(b.loss, TensorD({1, 1}, std::vector<double>{1.0}));
    for (Val v : b.leaves) {
      const TensorD& g = t.grad(v);
      analytic.insert(analytic.end(), g.data.begin(), g.data.end());
    }
  }
  auto rep = gradcheck::check(f, x0, analytic);
  CAPTURE(rep.worst_index);
  CHECK(rep.max_rel_err < 1e-4);
  // The scoring net block must carry nonzero gradient.
  double w_mag = 0.0;
  for (size_t i = 0; i < static_cast<size_t>(2 * m_dim * hidden + hidden + hidden); ++i) {
    w_mag += std::fabs(analytic[i]);
  }
  CHECK(w_mag > 1e-8);
}

}  // TEST_SUITE
