#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "fixtures.hpp"
#include "lvlingam/generate.hpp"
#include "lvlingam/io.hpp"

using namespace lvlingam;
using json = io::json;

TEST_CASE("model JSON round-trips", "[io][property]") {
  const auto fig = fixtures::eight_variable_model();
  CHECK(io::model_from_json(io::to_json(fig)) == fig);
  const auto reduced = canonicalize(fig).model;
  CHECK(io::model_from_json(io::to_json(reduced)) == reduced);
  CHECK(io::model_from_json(json::parse(io::to_json(reduced).dump())) == reduced);

  for (int trial = 0; trial < 100; ++trial) {
    GenerationConfig g;
    g.n_observed = 2 + trial % 5;
    g.n_hidden = trial % 3;
    g.n_irrelevant_hidden = trial % 2;
    const auto m = random_model(g, Seed(trial));
    const auto text = io::to_json(m).dump(2);
    const auto back = io::model_from_json(json::parse(text));
    CHECK(back == m);
    CHECK(io::to_json(back).dump(2) == text);
    const auto c = canonicalize(m).model;
    CHECK(io::model_from_json(json::parse(io::to_json(c).dump())) == c);
  }
}

TEST_CASE("model JSON schema errors", "[io]") {
  const auto bad = [](const char* text) {
    try {
      io::model_from_json(json::parse(text));
    } catch (const Error& e) {
      return e.code() == ErrorCode::invalid_input;
    }
    return false;
  };
  CHECK(bad(R"({"edges":[],"disturbances":[]})"));
  CHECK(bad(R"({"variables":[{"id":1}],"disturbances":[]})"));
  CHECK(bad(R"({"variables":[{"id":"a","observed":true}],"disturbances":[]})"));
  CHECK(bad(R"({"variables":[],"disturbances":[{"id":1,"family":"cauchy","params":[]}]})"));
  CHECK(bad(R"({"variables":[],"edges":[{"from":1,"to":2}],"disturbances":[]})"));
  CHECK(bad(R"({"variables":[],"disturbances":[{"id":1,"family":"laplace","params":[1]},{"id":1,"family":"laplace","params":[1]}]})"));
  CHECK(bad(R"([1,2])"));
}

TEST_CASE("basis, pattern, ensemble, means, sources round-trip", "[io][property]") {
  for (int trial = 0; trial < 100; ++trial) {
    GenerationConfig g;
    g.n_observed = 2 + trial % 4;
    g.n_hidden = trial % 2;
    const auto canon = canonicalize(random_model(g, Seed(100 + trial)));
    const auto tagged = observed_basis(canon);
    const auto b1 = io::basis_from_json(json::parse(io::to_json(tagged).dump()));
    CHECK(b1.row_ids == tagged.row_ids);
    CHECK(b1.matrix == tagged.matrix);
    CHECK(b1.col_tags == tagged.col_tags);

    const auto scrambled = scramble(tagged, Seed(trial));
    const auto b2 = io::basis_from_json(json::parse(io::to_json(scrambled).dump()));
    CHECK(b2.matrix == scrambled.matrix);
    CHECK(b2.col_tags.empty());

    const auto z = exact_zero_pattern(scrambled);
    CHECK((io::pattern_from_json(json::parse(io::to_json(z).dump())).mask == z.mask).all());

    const auto ens = perturb_ensemble(scrambled, 3, 0.01, Seed(trial));
    const auto e2 = io::ensemble_from_json(json::parse(io::to_json(ens).dump()));
    REQUIRE(e2.members.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(e2.members[i].matrix == ens.members[i].matrix);

    const auto means = means_in_row_order(scrambled, canon.model);
    CHECK(io::means_from_json(json::parse(io::means_to_json(means).dump())) == means);
  }
  const std::vector<MogSource> src = {MogSource::standardized({0.3, 0.7}, {1, -2}, {0.5, 0.2})};
  const auto back = io::sources_from_json(json::parse(io::to_json(src).dump()));
  // sources are re-standardized on read, which is exact only up to rounding
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(back[0].weights[c] == Catch::Approx(src[0].weights[c]).epsilon(1e-14));
    CHECK(back[0].means[c] == Catch::Approx(src[0].means[c]).epsilon(1e-14));
    CHECK(back[0].variances[c] == Catch::Approx(src[0].variances[c]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(io::basis_from_json(json::parse(R"({"row_ids":[1,2],"matrix":[[1,0]]})")), Error);
  CHECK_THROWS_AS(io::basis_from_json(json::parse(R"({"row_ids":[1,2],"matrix":[[1,0],[1]]})")), Error);
  CHECK_THROWS_AS(io::pattern_from_json(json::parse(R"({"mask":[[1]]})")), Error);
}

TEST_CASE("CSV round-trips exactly", "[io][property]") {
  for (int trial = 0; trial < 100; ++trial) {
    GenerationConfig g;
    g.n_observed = 2 + trial % 4;
    const auto m = random_model(g, Seed(trial));
    const auto d = simulate(m, 1 + trial % 7, Seed(trial));
    const auto back = io::data_from_csv(io::to_csv(d));
    CHECK(back.columns == d.columns);
    CHECK(back.values == d.values);
  }
  const auto d = io::data_from_csv("3, 5\r\n1.5,-2\r\n\r\n0,1e-3\r\n");
  CHECK(d.columns == std::vector<VariableId>{3, 5});
  CHECK(d.values(1, 1) == 1e-3);
  CHECK_THROWS_AS(io::data_from_csv("a,b\n1,2\n"), Error);
  CHECK_THROWS_AS(io::data_from_csv("1,2\n1\n"), Error);
  CHECK_THROWS_AS(io::data_from_csv("1,2\n1,x\n"), Error);
  CHECK_THROWS_AS(io::data_from_csv(""), Error);
}

TEST_CASE("atomic writes", "[io]") {
  const auto dir = std::filesystem::temp_directory_path() / ("lvlingam_io_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto path = (dir / "out.json").string();
  io::write_json(path, {{"a", 1}});
  CHECK(io::read_json(path) == json{{"a", 1}});
  io::write_json(path, {{"a", 2}});
  CHECK(io::read_json(path) == json{{"a", 2}});
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  CHECK(files == 1);
  CHECK_THROWS_AS(io::write_json((dir / "missing" / "x.json").string(), {}), Error);
  CHECK_THROWS_AS(io::read_json((dir / "nope.json").string()), Error);
  std::filesystem::remove_all(dir);
}
