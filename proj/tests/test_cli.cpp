#include <doctest.h>

#include <fstream>
#include <sstream>

#include "jemlab/cli.hpp"
#include "jemlab/config.hpp"
#include "jemlab/error.hpp"
#include "jemlab/tabular.hpp"
#include "support.hpp"

using namespace jemlab;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Shared fixtures, generated once per process.
const fs::path& root() {
  static const fs::path dir = [] {
    auto d = testing::scratch_dir("cli");
    REQUIRE(cli({"gen", "mixture2d", "-o", (d / "mix").string(), "-s", "gen.n=600"}).code == 0);
    REQUIRE(cli({"gen", "cueconflict", "-o", (d / "cue").string(), "-s", "gen.congruent=60", "-s", "gen.conflict=30"})
                .code == 0);
    REQUIRE(cli({"train", "-o", (d / "conv").string(), "-s", "data.path=" + (d / "cue").string(), "-s",
                 "train.iters=3", "-s", "train.warmup=1", "-s", "net.widths=4,4,4"})
                .code == 0);
    return d;
  }();
  return dir;
}

std::string conv_ckpt() { return (root() / "conv" / "model.jemc").string(); }

}  // namespace

TEST_CASE("config parsing") {
  auto cfg = RunConfig::parse("# comment\n\ntrain.alpha = 0.5\nsgld.steps=7\n");
  CHECK(cfg.number("train.alpha") == 0.5);
  CHECK(cfg.count("sgld.steps") == 7);
  CHECK(cfg.get("net.kind") == "auto");
  CHECK_THROWS_AS(RunConfig::parse("train.alpah=0.5\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("train.alpha=0.5\ntrain.alpha=0.6\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("just words\n"), ConfigError);
  cfg.apply("sweep.alphas=0,0.5,1");
  CHECK(cfg.numbers("sweep.alphas") == std::vector<double>{0, 0.5, 1});
  CHECK_THROWS_AS(cfg.apply("sweep.alphas"), ConfigError);
  cfg.set("train.batch", "many");
  CHECK_THROWS_AS(cfg.count("train.batch"), ConfigError);
  cfg.set("train.batch", "-3");
  CHECK_THROWS_AS(cfg.count("train.batch"), ConfigError);
  const auto back = RunConfig::parse(cfg.to_string());
  CHECK(back.to_string() == cfg.to_string());
  CHECK(RunConfig().numbers("sweep.alphas").size() == 11);

  RunConfig img;
  const auto tc_pts = train_config(img, false);
  const auto tc_img = train_config(img, true);
  CHECK_FALSE(tc_pts.sgld.clip);
  CHECK(tc_img.sgld.clip);
}

TEST_CASE("gen is deterministic and validates its arguments") {
  const auto a = root() / "gen_a", b = root() / "gen_b";
  const auto ra = cli({"gen", "mixture2d", "-o", a.string(), "-s", "gen.n=300"});
  const auto rb = cli({"gen", "mixture2d", "-o", b.string(), "-s", "gen.n=300"});
  REQUIRE(ra.code == 0);
  CHECK(testing::files_equal(a / "points.csv", b / "points.csv"));
  CHECK(testing::files_equal(a / "mixture.csv", b / "mixture.csv"));
  // Manifest lines carry path, size and digest; the digests must agree.
  std::istringstream ma(ra.out), mb(rb.out);
  std::string la, lb;
  while (std::getline(ma, la) && std::getline(mb, lb)) CHECK(la.substr(la.rfind('\t')) == lb.substr(lb.rfind('\t')));
  CHECK(file_digest(a / "points.csv") == file_digest(b / "points.csv"));

  for (const char* kind : {"softlabels", "perceptual", "probeset"}) {
    CHECK(cli({"gen", kind, "-o", (root() / kind).string(), "-s", "gen.points=30", "-s", "gen.probes=20", "-s",
               "gen.refs=3"})
              .code == 0);
  }
  const auto bad = cli({"gen", "spirals", "-o", (root() / "x").string()});
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("mixture2d") != std::string::npos);
  CHECK(cli({"gen", "mixture2d", "-s", "gen.k=1", "-o", (root() / "k1").string()}).code == kExitUsage);
  CHECK(cli({"gen", "mixture2d", "-s", "gen.bogus=1"}).code == kExitUsage);
  write_text(root() / "blocker", "a file where a directory should go\n");
  CHECK(cli({"gen", "mixture2d", "-o", (root() / "blocker" / "sub").string()}).code == kExitIo);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({}).code == kExitUsage);
}

TEST_CASE("config files and overrides") {
  const auto path = root() / "run.cfg";
  write_text(path, "gen.n = 90\ngen.seed = 4\n");
  const auto dir = root() / "from_file";
  REQUIRE(cli({"gen", "mixture2d", "-c", path.string(), "-o", dir.string()}).code == 0);
  CHECK(CsvTable::read(dir / "points.csv").rows() == 90);
  CHECK(cli({"gen", "mixture2d", "-c", (root() / "nope.cfg").string()}).code == kExitIo);
}

TEST_CASE("train writes a checkpoint, a log and the resolved config") {
  const auto out = root() / "train";
  const auto r = cli({"train", "-o", out.string(), "-s", "data.path=" + (root() / "mix").string(), "-s",
                      "train.iters=200", "-s", "train.warmup=20", "-s", "train.lr=0.01"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out / "model.jemc"));
  CHECK(lines(read_text(out / "train_log.csv")) == 201);
  const auto resolved = RunConfig::read(out / "config.resolved");
  CHECK(resolved.count("train.iters") == 200);

  CHECK(cli({"train", "-o", out.string(), "-s", "data.path=" + (root() / "missing").string()}).code == kExitUsage);
  CHECK(cli({"train", "-o", out.string()}).code == kExitUsage);
  CHECK(cli({"train", "-s", "train.alpha=2", "-s", "data.path=" + (root() / "mix").string()}).code == kExitUsage);

  const auto div = root() / "diverge";
  const auto d = cli({"train", "-o", div.string(), "-s", "data.path=" + (root() / "mix").string(), "-s",
                      "train.alpha=0.5", "-s", "train.iters=5", "-s", "train.warmup=1", "-s", "sgld.noise=1e308"});
  CHECK(d.code == kExitDivergence);
  CHECK(d.err.find("diverged") != std::string::npos);
  CHECK(fs::exists(div / "last_good.jemc"));
  CHECK(read_text(div / "train_log.csv").find("# diverged") != std::string::npos);
}

TEST_CASE("sweep directories, rows and failure handling") {
  const auto base = std::vector<std::string>{"-s", "data.path=" + (root() / "mix").string(), "-s", "train.iters=10",
                                             "-s", "train.warmup=1", "-s", "sgld.steps=5", "--no-timestamp"};
  auto args = std::vector<std::string>{"sweep", "-o", (root() / "sweep1").string(), "-s", "sweep.alphas=0.5"};
  args.insert(args.end(), base.begin(), base.end());
  REQUIRE(cli(args).code == 0);
  CHECK(fs::exists(root() / "sweep1" / "alpha_0.50_seed_0" / "model.jemc"));
  CHECK(fs::exists(root() / "sweep1" / "alpha_0.50_seed_0" / "config.resolved"));
  const auto csv = CsvTable::read(root() / "sweep1" / "sweep.csv");
  CHECK(csv.rows() == 2);  // accuracy and density_tv
  CHECK(read_text(root() / "sweep1" / "sweep.csv").rfind("alpha,", 0) == 0);

  args = {"sweep", "-o", (root() / "sweep2").string(), "-s", "sweep.alphas=0,0.5", "-s", "sgld.noise=1e308"};
  args.insert(args.end(), base.begin(), base.end());
  const auto r = cli(args);
  CHECK(r.code == 0);
  const auto text = read_text(root() / "sweep2" / "sweep.csv");
  CHECK(text.find("failed") != std::string::npos);
  CHECK(fs::exists(root() / "sweep2" / "alpha_0.00_seed_0" / "model.jemc"));

  args = {"sweep", "-o", (root() / "sweep3").string(), "-s", "sweep.alphas=0.5", "-s", "sgld.noise=1e308"};
  args.insert(args.end(), base.begin(), base.end());
  CHECK(cli(args).code == kExitDivergence);
}

TEST_CASE("eval computes requested metrics deterministically") {
  const auto ckpt = (root() / "train" / "model.jemc").string();
  REQUIRE(fs::exists(ckpt));
  const auto args = [&](const std::string& out) {
    return std::vector<std::string>{"eval", "--checkpoint", ckpt, "--metrics", "accuracy,density_tv,soft_label_ce",
                                    "-s", "eval.points=" + (root() / "mix").string(), "-s",
                                    "eval.softlabels=" + (root() / "softlabels").string(), "-o", out,
                                    "--no-timestamp"};
  };
  REQUIRE(cli(args((root() / "eval1").string())).code == 0);
  REQUIRE(cli(args((root() / "eval2").string())).code == 0);
  CHECK(testing::files_equal(root() / "eval1" / "metrics.csv", root() / "eval2" / "metrics.csv"));
  CHECK(testing::files_equal(root() / "eval1" / "metrics.json", root() / "eval2" / "metrics.json"));
  CHECK(CsvTable::read(root() / "eval1" / "metrics.csv").rows() == 3);

  CHECK(cli({"eval", "--checkpoint", ckpt, "--metrics", ""}).code == kExitUsage);
  CHECK(cli({"eval", "--checkpoint", ckpt, "--metrics", "vibes"}).code == kExitUsage);
  CHECK(cli({"eval", "--metrics", "accuracy"}).code == kExitUsage);
  CHECK(cli({"eval", "--checkpoint", (root() / "none.jemc").string(), "--metrics", "density_tv", "-s",
             "eval.points=" + (root() / "mix").string()})
            .code == kExitIo);

  // Shape bias on the cue-conflict set lands in [0, 1] or is reported undefined.
  const auto sb = cli({"eval", "--checkpoint", conv_ckpt(), "--metrics", "shape_bias", "-s",
                       "eval.cueconflict=" + (root() / "cue").string(), "-o", (root() / "eval_sb").string()});
  REQUIRE(sb.code == 0);
  const auto table = CsvTable::read(root() / "eval_sb" / "metrics.csv");
  REQUIRE(table.rows() == 1);
  const auto& v = table.cell(0, table.column("value"));
  if (!v.empty()) CHECK((std::stod(v) >= 0.0 && std::stod(v) <= 1.0));
}

TEST_CASE("sample writes PGM snapshots") {
  const auto out = root() / "sample0";
  REQUIRE(cli({"sample", "--checkpoint", conv_ckpt(), "-o", out.string(), "-s", "sample.steps=0"}).code == 0);
  std::size_t pgm = 0;
  for (const auto& f : fs::directory_iterator(out)) pgm += f.path().extension() == ".pgm";
  CHECK(pgm == 4);
  const auto first = testing::file_bytes(out / "sample_000_step_0000.pgm");
  CHECK(first.rfind("P5\n16 16\n255\n", 0) == 0);
  CHECK(first.size() == std::string("P5\n16 16\n255\n").size() + 256);

  const auto a = root() / "sample_a", b = root() / "sample_b";
  const std::vector<std::string> set{"-s", "sample.steps=6", "-s", "sample.every=3", "-s", "sample.count=2"};
  auto args = std::vector<std::string>{"sample", "--checkpoint", conv_ckpt(), "-o", a.string()};
  args.insert(args.end(), set.begin(), set.end());
  REQUIRE(cli(args).code == 0);
  args[4] = b.string();
  REQUIRE(cli(args).code == 0);
  for (const char* name : {"sample_001_step_0000.pgm", "sample_001_step_0003.pgm", "sample_001_step_0006.pgm"}) {
    CHECK(testing::files_equal(a / name, b / name));
  }
  CHECK(cli({"sample", "--checkpoint", (root() / "train" / "model.jemc").string(), "-o", a.string()}).code ==
        kExitUsage);
  CHECK(cli({"sample", "--checkpoint", conv_ckpt(), "-o", a.string(), "-s", "sample.noise=1e308", "-s",
             "sample.steps=2"})
            .code == kExitDivergence);
}

TEST_CASE("PNM encoding maps [-1, 1] onto 0..255") {
  const auto gray = encode_pnm(Tensor(Shape{1, 1, 3}, std::vector<double>{-1.0, 0.0, 2.0}));
  const std::string header = "P5\n3 1\n255\n";
  REQUIRE(gray.size() == header.size() + 3);
  CHECK(static_cast<unsigned char>(gray[header.size()]) == 0);
  CHECK(static_cast<unsigned char>(gray[header.size() + 1]) == 128);
  CHECK(static_cast<unsigned char>(gray[header.size() + 2]) == 255);
  const auto color = encode_pnm(Tensor(Shape{3, 1, 1}, std::vector<double>{1.0, -1.0, 0.0}));
  CHECK(std::string(color.begin(), color.begin() + 11) == "P6\n1 1\n255\n");
}

TEST_CASE("refine writes one row per step count") {
  const auto out = root() / "refine";
  const auto r = cli({"refine", "--checkpoint", conv_ckpt(), "--data", (root() / "cue").string(), "--steps",
                      "0,5,10,20", "-o", out.string()});
  REQUIRE(r.code == 0);
  const auto table = CsvTable::read(out / "refine.csv");
  REQUIRE(table.rows() == 4);
  CHECK(table.header() == std::vector<std::string>{"steps", "shape_bias", "shape_bias_all"});

  // Step 0 is the plain evaluation of the conflict images.
  const auto zero = cli({"refine", "--checkpoint", conv_ckpt(), "--data", (root() / "cue").string(), "--steps", "0",
                         "-o", (root() / "refine0").string()});
  REQUIRE(zero.code == 0);
  const auto t0 = CsvTable::read(root() / "refine0" / "refine.csv");
  CHECK(t0.cell(0, 1) == table.cell(0, 1));
  const auto again = cli({"refine", "--checkpoint", conv_ckpt(), "--data", (root() / "cue").string(), "--steps",
                          "0,5,10,20", "-o", (root() / "refine_again").string()});
  REQUIRE(again.code == 0);
  CHECK(testing::files_equal(out / "refine.csv", root() / "refine_again" / "refine.csv"));
  CHECK(cli({"refine", "--checkpoint", conv_ckpt(), "-o", out.string()}).code == kExitUsage);
}

TEST_CASE("oracle-check on the toy and with an injected sign flip") {
  const auto ok = cli({"oracle-check", "--toy", "2", "-s", "oracle.grid_lo=-1", "-s", "oracle.grid_hi=1", "-s",
                       "oracle.grid_n=64", "-s", "oracle.chain_steps=20", "-s", "oracle.negatives=128",
                       // Flat model on uniform box data: both gradients are pure sampling noise.
                       "-s", "oracle.tol_cosine=-1", "-o",
                       (root() / "oracle").string()});
  REQUIRE(ok.code == 0);
  const auto pos = ok.out.find("\nz=");
  REQUIRE(pos != std::string::npos);
  CHECK(std::abs(std::stod(ok.out.substr(pos + 3)) - 8.0) < 1e-9);

  const auto ckpt = (root() / "train" / "model.jemc").string();
  const auto check = [&](const std::string& dir, bool flip, const std::string& tol) {
    std::vector<std::string> a{"oracle-check", "--checkpoint", ckpt, "-s", "oracle.data=" + (root() / "mix").string(),
                               "-s", "oracle.grid_n=48", "-s", "oracle.tol_cosine=" + tol, "-o",
                               (root() / dir).string()};
    if (flip) a.push_back("--flip-sign");
    return cli(a);
  };
  const auto cosine_of = [](const std::string& text) {
    const auto at = text.find("cd_exact_cosine=");
    REQUIRE(at != std::string::npos);
    return std::stod(text.substr(at + 16));
  };
  const auto trained = check("oracle2", false, "-1");
  CHECK(trained.code == 0);
  CHECK(trained.out.find("normalization_residual=") != std::string::npos);
  // Same seed, same chains: the flip negates the CD estimate and nothing else.
  const auto flipped = check("oracle3", true, "-1");
  CHECK(flipped.code == 0);
  CHECK(cosine_of(flipped.out) == -cosine_of(trained.out));
  CHECK(check("oracle5", false, "1").code == kExitOracle);
  CHECK(cli({"oracle-check", "-o", (root() / "oracle4").string()}).code == kExitUsage);
  CHECK(cli({"oracle-check", "--checkpoint", conv_ckpt()}).code == kExitUsage);
}
