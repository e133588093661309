#include <doctest.h>

#include <json.hpp>

#include "fuselm/manifest.hpp"
#include "test_support.hpp"

using namespace fuselm;

TEST_SUITE("manifest") {
  TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    testing::TempDir dir("sha");
    testing::write_text(dir / "f", "abc");
    CHECK(sha256_file(dir / "f") == sha256_hex("abc"));
  }

  TEST_CASE("manifest json layout") {
    testing::TempDir dir("manifest");
    testing::write_text(dir / "in.txt", "abc");
    RunManifest m;
    m.command = "train";
    m.config = {{"epochs", "3"}, {"fusion", "late-concat"}};
    m.seed = 42;
    m.add_input(dir / "in.txt");
    m.outputs = {"out.flmc"};
    m.started = utc_timestamp();
    m.finished = m.started;
    m.write(dir / "m.json");
    std::ifstream in(dir / "m.json");
    const auto j = nlohmann::ordered_json::parse(in);
    CHECK(j["tool"] == "fuselm");
    CHECK(j["version"] == std::string(kVersion));
    CHECK(j["command"] == "train");
    CHECK(j["config"]["epochs"] == "3");
    CHECK(j["seed"] == 42);
    CHECK(j["inputs"][(dir / "in.txt").string()] == sha256_hex("abc"));
    CHECK(j["outputs"][0] == "out.flmc");
    const std::string ts = j["started"];
    CHECK(ts.size() == 20);
    CHECK(ts.back() == 'Z');
  }
}
