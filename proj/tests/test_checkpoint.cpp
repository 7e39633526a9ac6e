#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sfea/checkpoint.hpp"

using namespace sfea;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    fs::path dir = fs::temp_directory_path() / "sfea_ckpt_tests";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_SUITE("checkpoint") {
    TEST_CASE("round trip preserves parameters and metadata") {
        EnhancerModel m = EnhancerModel::init(2, 4, 2, 99);
        CheckpointMeta meta;
        meta.stage = "source";
        meta.seed = 1234;
        meta.epoch = 7;
        fs::path p = temp_dir() / "model.ckpt";
        save_enhancer(m, meta, p.string());

        CheckpointMeta got;
        EnhancerModel back = load_enhancer(p.string(), &got);
        CHECK(back.digest() == m.digest());
        CHECK(back.depth == 2);
        CHECK(back.base_channels == 4);
        CHECK(back.num_classes == 2);
        CHECK(got.stage == "source");
        CHECK(got.seed == 1234);
        CHECK(got.epoch == 7);
    }

    TEST_CASE("sidecar is human-readable json naming every field") {
        EnhancerModel m = EnhancerModel::init(2, 2, 2, 1);
        CheckpointMeta meta;
        meta.stage = "adapted";
        fs::path p = temp_dir() / "tagged.ckpt";
        save_enhancer(m, meta, p.string());

        std::ifstream side(p.string() + ".json");
        std::string text((std::istreambuf_iterator<char>(side)), std::istreambuf_iterator<char>());
        for (const char* key : {"format_version", "depth", "base_channels", "num_classes",
                                "stage", "seed", "epoch", "adapted"})
            CHECK(text.find(key) != std::string::npos);
    }

    TEST_CASE("bad magic, truncation, and missing sidecar are format errors") {
        fs::path p = temp_dir() / "broken.ckpt";
        std::ofstream(p) << "XXXXXXXXnot a checkpoint";
        CHECK_THROWS_AS(load_enhancer(p.string()), DataError);

        EnhancerModel m = EnhancerModel::init(2, 2, 2, 2);
        CheckpointMeta meta;
        meta.stage = "source";
        fs::path q = temp_dir() / "trunc.ckpt";
        save_enhancer(m, meta, q.string());
        auto size = fs::file_size(q);
        fs::resize_file(q, size / 2);
        CHECK_THROWS_AS(load_enhancer(q.string()), DataError);

        fs::path s = temp_dir() / "nosidecar.ckpt";
        save_enhancer(m, meta, s.string());
        fs::remove(s.string() + ".json");
        CHECK_THROWS_AS(load_enhancer(s.string()), DataError);
    }

    TEST_CASE("stage tag is validated on save") {
        EnhancerModel m = EnhancerModel::init(2, 2, 2, 3);
        CheckpointMeta meta;
        meta.stage = "finetuned";
        CHECK_THROWS_AS(save_enhancer(m, meta, (temp_dir() / "bad.ckpt").string()), ContractError);
    }

    TEST_CASE("missing file is a data error") {
        CHECK_THROWS_AS(load_enhancer((temp_dir() / "ghost.ckpt").string()), DataError);
    }
}
