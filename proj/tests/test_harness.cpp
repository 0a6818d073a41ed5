#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "seqattn/attention_export.h"
#include "seqattn/error.h"
#include "seqattn/train.h"
#include "test_util.h"

using namespace seqattn;
namespace fs = std::filesystem;

namespace {

std::string scratch_dir(const std::string& leaf) {
  const std::string dir = (fs::temp_directory_path() / "seqattn_harness" / leaf).string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

TrainConfig small_copy_config(const std::string& out_dir) {
  TrainConfig cfg;
  cfg.task.kind = TaskKind::Copy;
  cfg.task.vocab = 6;
  cfg.task.len_min = 2;
  cfg.task.len_max = 4;
  cfg.model.src_emb = 4;
  cfg.model.enc_hidden = 6;
  cfg.model.subsample = {1};
  cfg.model.dec_hidden = 6;
  cfg.model.emb_dim = 4;
  cfg.model.scorer.kind = ScorerKind::Mlp;
  cfg.model.scorer.proj = 6;
  cfg.model.scorer.order = 1;
  cfg.model.scorer.bank = FilterBank{{{3, 2}}};
  cfg.adam.lr = 5e-3;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.train_examples = 12;
  cfg.dev_examples = 4;
  cfg.out_dir = out_dir;
  return cfg;
}

}  // namespace

TEST_CASE("adam_step") {
  SUBCASE("zero gradients leave parameters unchanged and decay the first moment") {
    auto p = Tensor::from({2}, {1.0, -2.0}, true);
    p->name = "p";
    AdamState adam;
    adam.init({p});
    // one real step to move the moments off zero
    p->grad = {2.0, 2.0};
    adam_step({p}, adam);
    const auto m_before = adam.m[0];
    const auto params_after_first = p->data;
    p->zero_grad();
    adam_step({p}, adam);
    CHECK(p->data[0] == doctest::Approx(params_after_first[0]).epsilon(1e-3));
    CHECK(adam.m[0][0] == doctest::Approx(0.9 * m_before[0]).epsilon(1e-12));
  }
  SUBCASE("single step on theta^2 matches the closed form") {
    auto p = Tensor::from({1}, {1.0}, true);
    AdamState adam;
    adam.init({p});
    p->grad = {2.0};  // d/dtheta theta^2 at 1
    adam_step({p}, adam);
    // m_hat = 2, v_hat = 4 -> update = lr * 2 / (2 + eps)
    const double expect = 1.0 - 1e-3 * 2.0 / (2.0 + 1e-8);
    CHECK(p->data[0] == doctest::Approx(expect).epsilon(1e-15));
    CHECK(std::abs(1.0 - p->data[0] - 1e-3) < 1e-10);  // magnitude ~ lr
  }
  SUBCASE("identical models and gradients update identically") {
    auto a = Tensor::from({3}, {0.1, 0.2, 0.3}, true);
    auto b = Tensor::from({3}, {0.1, 0.2, 0.3}, true);
    AdamState sa, sb;
    sa.init({a});
    sb.init({b});
    for (int step = 0; step < 5; ++step) {
      a->grad = {0.5, -0.1, 0.2};
      b->grad = {0.5, -0.1, 0.2};
      adam_step({a}, sa);
      adam_step({b}, sb);
    }
    CHECK(a->data == b->data);
  }
  SUBCASE("non-finite gradients abort with the parameter name") {
    auto p = Tensor::from({1}, {1.0}, true);
    p->name = "bad_param";
    AdamState adam;
    adam.init({p});
    p->grad = {std::nan("")};
    CHECK_THROWS_WITH_AS(adam_step({p}, adam), doctest::Contains("bad_param"), ContractError);
  }
}

TEST_CASE("gradient clipping") {
  auto p = Tensor::from({2}, {0.0, 0.0}, true);
  p->grad = {3.0, 4.0};  // norm 5
  clip_gradients({p}, 2.5);
  CHECK(p->grad[0] == doctest::Approx(1.5));
  CHECK(p->grad[1] == doctest::Approx(2.0));
  clip_gradients({p}, 0.0);  // disabled: no change
  CHECK(p->grad[0] == doctest::Approx(1.5));
}

TEST_CASE("train config json") {
  SUBCASE("round trip preserves every field") {
    TrainConfig cfg = small_copy_config("out");
    auto text = cfg.to_json();
    TrainConfig parsed = TrainConfig::from_json_string(text);
    CHECK(parsed.to_json() == text);
  }
  SUBCASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(TrainConfig::from_json_string(R"({"tsak":{}})"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json_string(R"({"task":{"vocb":8}})"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json_string(R"({"train":{"lr":0.1,"epohcs":3}})"),
                    ConfigError);
    CHECK_THROWS_AS(
        TrainConfig::from_json_string(R"({"model":{"scorer":{"oder":3}}})"), ConfigError);
  }
  SUBCASE("invalid json and precision strings are rejected") {
    CHECK_THROWS_AS(TrainConfig::from_json_string("{"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json_string(R"({"train":{"precision":"half"}})"),
                    ConfigError);
  }
}

TEST_CASE("checkpoint round trip is byte identical") {
  const std::string dir = scratch_dir("ckpt");
  TrainConfig cfg = small_copy_config(dir);
  Rng rng(3);
  Seq2SeqModel model(resolve_model_config(cfg.task, cfg.model), rng);
  AdamState adam;
  adam.hyper = cfg.adam;
  adam.init(model.params.tensors());

  auto ckpt = make_checkpoint(cfg, model, adam, 3, Rng(9).serialize());
  const std::string p1 = dir + "/a.ckpt";
  const std::string p2 = dir + "/b.ckpt";
  save_checkpoint(p1, ckpt);
  auto loaded = load_checkpoint(p1);
  CHECK(loaded.epoch == 3);
  CHECK(loaded.config_json == ckpt.config_json);
  CHECK(loaded.rng_state == ckpt.rng_state);
  save_checkpoint(p2, loaded);
  CHECK(read_file(p1) == read_file(p2));

  SUBCASE("models rebuilt from a checkpoint carry identical parameters") {
    auto rebuilt = model_from_checkpoint(loaded);
    REQUIRE(rebuilt.params.items.size() == model.params.items.size());
    for (std::size_t i = 0; i < model.params.items.size(); ++i) {
      CHECK(rebuilt.params.items[i].first == model.params.items[i].first);
      CHECK(rebuilt.params.items[i].second->data == model.params.items[i].second->data);
    }
  }
  SUBCASE("corrupt files are rejected") {
    const std::string bad = dir + "/bad.ckpt";
    std::ofstream os(bad, std::ios::binary);
    os << "not a checkpoint";
    os.close();
    CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  }
}

TEST_CASE("train writes checkpoints and metrics") {
  SUBCASE("zero epochs yields the initialization checkpoint and no records") {
    const std::string dir = scratch_dir("train0");
    TrainConfig cfg = small_copy_config(dir);
    cfg.epochs = 0;
    auto result = train(cfg);
    CHECK(result.records.empty());
    CHECK(fs::exists(result.checkpoint_path));
    CHECK(read_file(result.metrics_path).empty());
  }
  SUBCASE("a short run logs one record per epoch with finite losses") {
    const std::string dir = scratch_dir("train2");
    TrainConfig cfg = small_copy_config(dir);
    auto result = train(cfg);
    REQUIRE(result.records.size() == 2);
    for (const auto& rec : result.records) {
      CHECK(std::isfinite(rec.train_loss));
      CHECK(rec.metric_name == "dev_cer");
    }
    // one json object per line
    std::istringstream lines(read_file(result.metrics_path));
    std::string line;
    int count = 0;
    while (std::getline(lines, line)) {
      CHECK(line.front() == '{');
      CHECK(line.find("\"epoch\":") != std::string::npos);
      ++count;
    }
    CHECK(count == 2);
  }
  SUBCASE("identical config and seed reproduce bytes exactly") {
    const std::string dir1 = scratch_dir("det1");
    const std::string dir2 = scratch_dir("det2");
    TrainConfig cfg1 = small_copy_config(dir1);
    TrainConfig cfg2 = small_copy_config(dir2);
    auto r1 = train(cfg1);
    auto r2 = train(cfg2);
    CHECK(read_file(r1.metrics_path) == read_file(r2.metrics_path));
    CHECK(read_file(fs::path(dir1) / "epoch_0002.ckpt") ==
          read_file(fs::path(dir2) / "epoch_0002.ckpt"));
  }
}

TEST_CASE("alignment export") {
  SUBCASE("csv round trip and row sums") {
    Rng rng(4);
    auto m = Tensor::create({3, 5});
    for (int t = 0; t < 3; ++t) {
      auto a = testutil::random_alignment(5, rng);
      std::copy(a->data.begin(), a->data.end(), m->data.begin() + t * 5);
    }
    std::ostringstream os;
    write_alignment_csv(m, os);
    std::istringstream is(os.str());
    auto back = read_alignment_csv(is);
    CHECK(back->shape == m->shape);
    CHECK(back->data == m->data);  // %.17g round-trips doubles exactly
    for (int t = 0; t < 3; ++t) {
      double sum = 0.0;
      for (int s = 0; s < 5; ++s) sum += back->data[t * 5 + s];
      CHECK(std::abs(sum - 1.0) <= 1e-4);
    }
  }
  SUBCASE("one-hot rows paint a single 255 pixel per row") {
    auto m = Tensor::create({2, 4});
    m->data[1] = 1.0;
    m->data[4 + 3] = 1.0;
    std::ostringstream os;
    write_alignment_pgm(m, os);
    const std::string pgm = os.str();
    CHECK(pgm.rfind("P5\n4 2\n255\n", 0) == 0);
    const std::string pixels = pgm.substr(pgm.size() - 8);
    for (int i = 0; i < 8; ++i) {
      const unsigned char v = static_cast<unsigned char>(pixels[i]);
      CHECK(v == ((i == 1 || i == 7) ? 255 : 0));
    }
  }
  SUBCASE("csv reload then pgm equals direct pgm export") {
    Rng rng(11);
    auto m = Tensor::create({4, 6});
    for (int t = 0; t < 4; ++t) {
      auto a = testutil::random_alignment(6, rng);
      std::copy(a->data.begin(), a->data.end(), m->data.begin() + t * 6);
    }
    std::ostringstream direct;
    write_alignment_pgm(m, direct);
    std::ostringstream csv;
    write_alignment_csv(m, csv);
    std::istringstream is(csv.str());
    auto reloaded = read_alignment_csv(is);
    std::ostringstream via_csv;
    write_alignment_pgm(reloaded, via_csv);
    CHECK(direct.str() == via_csv.str());
  }
}

TEST_CASE("export_attention writes a decodable artifact") {
  const std::string dir = scratch_dir("export");
  TrainConfig cfg = small_copy_config(dir);
  cfg.epochs = 1;
  auto result = train(cfg);

  TaskSpec probe = cfg.task;
  probe.seed = 777;
  auto examples = generate(probe, 1);
  const std::string input_path = dir + "/input.tsv";
  save_dataset(input_path, examples);

  const std::string csv_path = dir + "/align.csv";
  export_attention(result.checkpoint_path, input_path, "csv", csv_path);
  std::ifstream is(csv_path);
  auto matrix = read_alignment_csv(is);
  CHECK(matrix->dim(0) >= 1);
  for (int t = 0; t < matrix->dim(0); ++t) {
    double sum = 0.0;
    for (int s = 0; s < matrix->dim(1); ++s) sum += matrix->data[t * matrix->dim(1) + s];
    CHECK(std::abs(sum - 1.0) <= 1e-4);
  }

  const std::string pgm_path = dir + "/align.pgm";
  export_attention(result.checkpoint_path, input_path, "pgm", pgm_path);
  CHECK(read_file(pgm_path).rfind("P5\n", 0) == 0);

  CHECK_THROWS_AS(export_attention(result.checkpoint_path, input_path, "svg", dir + "/x"),
                  ConfigError);
}
