#include <gtest/gtest.h>

#include "msdm/checkpoint.hpp"

using namespace msdm;

namespace {

ModelConfig two_modalities(std::uint64_t seed) {
  ModalityConfig a;
  a.name = "coarse";
  a.bands = 3;
  a.encoder = pointwise_encoder(3, {4, 5});
  a.encoder_rf = 1;
  a.encoder_jump = 1;
  a.scales = {1, 5};
  a.branch_width = 4;
  a.head_width = 6;
  ModalityConfig b;
  b.name = "fine";
  b.bands = 2;
  b.encoder = build_encoder(2, {{3, 1, 3}, {3, 2, 0}});
  const auto rf = rf_symbolic(b.encoder);
  b.encoder_rf = rf.rf;
  b.encoder_jump = rf.jump;
  b.scales = {5, 9};
  b.branch_width = 3;
  b.head_width = 6;
  return ModelConfig{{a, b}, 4, 7, seed};
}

}  // namespace

TEST(Checkpoint, RoundTripRestoresEveryTensorAndPrediction) {
  Model model(two_modalities(3));
  Rng rng(4);
  std::vector<Tensor> inputs{Tensor({3, 3, 5, 5}), Tensor({3, 2, 9, 9})};
  for (auto& t : inputs)
    for (auto& v : t.values) v = static_cast<float>(rng.normal());
  model.forward(inputs, Mode::Train);  // moves batch-norm running stats off their defaults
  const std::string bytes = encode_checkpoint(model, {3, 41, 2});
  auto loaded = decode_checkpoint(bytes);
  EXPECT_EQ(loaded.info.seed, 3u);
  EXPECT_EQ(loaded.info.step, 41);
  EXPECT_EQ(loaded.info.epoch, 2);
  const auto a = model.named_tensors(true), b = loaded.model.named_tensors(true);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].tensor->values, b[i].tensor->values) << a[i].layer;
  EXPECT_EQ(model.forward(inputs, Mode::Eval).values, loaded.model.forward(inputs, Mode::Eval).values);
  EXPECT_EQ(encode_checkpoint(loaded.model, {3, 41, 2}), bytes);
}

TEST(Checkpoint, CorruptionIsReported) {
  Model model(two_modalities(5));
  const std::string bytes = encode_checkpoint(model, {});
  EXPECT_THROW(decode_checkpoint("nonsense\n\n"), DataError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 4)), DataError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 20)), DataError);
  std::string wrong = bytes;
  wrong.replace(wrong.find("seed: "), 6, "sead: ");
  EXPECT_THROW(decode_checkpoint(wrong), DataError);
}

TEST(Checkpoint, SnapshotRestore) {
  Model model(two_modalities(6));
  const auto snap = snapshot(model);
  for (auto* p : model.parameters())
    for (auto& v : p->values) v += 1.0f;
  restore(model, snap);
  const auto now = snapshot(model);
  EXPECT_EQ(now, snap);
}

TEST(ConfigJson, ModelConfigRoundTrip) {
  const ModelConfig c = two_modalities(7);
  const ModelConfig back = model_config_from_json(model_config_to_json(c));
  ASSERT_EQ(back.modalities.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.modalities[i].encoder, c.modalities[i].encoder);
    EXPECT_EQ(back.modalities[i].scales, c.modalities[i].scales);
    EXPECT_EQ(back.modalities[i].encoder_rf, c.modalities[i].encoder_rf);
    EXPECT_EQ(back.modalities[i].encoder_jump, c.modalities[i].encoder_jump);
    EXPECT_EQ(back.modalities[i].head_width, c.modalities[i].head_width);
  }
  EXPECT_EQ(back.projection_dim, 7);
  EXPECT_EQ(model_config_to_json(back), model_config_to_json(c));
}

TEST(ConfigJson, PresetsAndDeclaredReceptiveField) {
  const Json j = Json::parse(R"({"seed": 1, "species_count": 3, "modalities": [
      {"name": "bio", "bands": 19, "scales": [1, 5, 9], "encoder": {"preset": "bioclim"}},
      {"name": "sat", "bands": 4, "scales": [25, 59, 115], "encoder": {"preset": "satellite"}}]})");
  const ModelConfig c = model_config_from_json(j);
  EXPECT_EQ(c.modalities[0].encoder_rf, 1);
  EXPECT_EQ(c.modalities[1].encoder_rf, 25);
  EXPECT_EQ(c.modalities[1].encoder_jump, 2);
  EXPECT_EQ(c.fusion_dim(), 6 * 1024);
  // a declared rf that disagrees with the stack is refused
  Json bad = j;
  bad["modalities"][1]["encoder"]["rf"] = 27;
  EXPECT_THROW(model_config_from_json(bad).modalities[1].validate(), ConfigError);
  Json unknown = j;
  unknown["modalities"][0]["encoder"]["preset"] = "resnet";
  EXPECT_THROW(model_config_from_json(unknown), ConfigError);
}

TEST(ConfigJson, TrainConfigRoundTripAndValidation) {
  TrainConfig t;
  t.epochs = 4;
  t.batch_size = 16;
  t.sgd.learning_rate = 0.125;
  t.pos_weight = 2.5;
  t.shuffle_seed = 99;
  const TrainConfig back = train_config_from_json(train_config_to_json(t));
  EXPECT_EQ(back.epochs, 4);
  EXPECT_EQ(back.batch_size, 16);
  EXPECT_EQ(back.sgd.learning_rate, 0.125);
  EXPECT_EQ(back.pos_weight, 2.5);
  EXPECT_EQ(back.shuffle_seed, 99u);
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"epochs": 0})")), ConfigError);
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"pos_weight": 0.5})")), ConfigError);
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"batch_size": "many"})")), ConfigError);
}

TEST(Override, NestedKeysArraysAndStrings) {
  Json j = Json::parse(R"({"train": {"epochs": 30}, "model": {"modalities": [{"scales": [1]}]}})");
  apply_override(j, "train.epochs=2");
  apply_override(j, "model.modalities.0.scales=[1,5]");
  apply_override(j, "out=runs/a");
  apply_override(j, "train.sgd.new=0.5");
  EXPECT_EQ(j["train"]["epochs"], 2);
  EXPECT_EQ(j["model"]["modalities"][0]["scales"], Json::parse("[1,5]"));
  EXPECT_EQ(j["out"], "runs/a");
  EXPECT_EQ(j["train"]["sgd"]["new"], 0.5);
  EXPECT_THROW(apply_override(j, "noequals"), ConfigError);
  EXPECT_THROW(apply_override(j, "model.modalities.3.scales=[1]"), ConfigError);
  EXPECT_THROW(apply_override(j, "train.epochs.x=1"), ConfigError);
}

TEST(ResolvePath, RelativeToConfigDirectory) {
  EXPECT_EQ(resolve_path("/a/b", "c/d.grb1"), "/a/b/c/d.grb1");
  EXPECT_EQ(resolve_path("/a/b", "/x/y"), "/x/y");
  EXPECT_EQ(resolve_path("/a/b", "../c"), "/a/c");
  EXPECT_EQ(resolve_path("", "c"), "c");
}
