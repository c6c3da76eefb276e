#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ttbd/dataset.hpp"
#include "ttbd/synth.hpp"

using namespace ttbd;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir() {
    const auto d = fs::temp_directory_path() / "ttbd_dataset_test";
    fs::create_directories(d);
    return d.string();
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

void push_be32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back((x >> 24) & 0xff);
    v.push_back((x >> 16) & 0xff);
    v.push_back((x >> 8) & 0xff);
    v.push_back(x & 0xff);
}

}  // namespace

TEST_CASE("IDX pair loads with normalization and no flags") {
    const std::string dir = tmp_dir();
    // 2 images of 2x3, pixel bytes 0..11; labels 7 and 3
    std::vector<unsigned char> imgs;
    push_be32(imgs, 0x00000803);
    push_be32(imgs, 2);
    push_be32(imgs, 2);
    push_be32(imgs, 3);
    for (unsigned char b = 0; b < 12; ++b) imgs.push_back(static_cast<unsigned char>(b * 20));
    std::vector<unsigned char> labs;
    push_be32(labs, 0x00000801);
    push_be32(labs, 2);
    labs.push_back(7);
    labs.push_back(3);

    const std::string ip = dir + "/imgs", lp = dir + "/labs";
    write_bytes(ip, imgs);
    write_bytes(lp, labs);

    const LabeledDataset d = load_mnist_idx(ip, lp);
    d.check_consistent();
    CHECK(d.size() == 2);
    CHECK(d.images.shape == std::vector<std::size_t>{2, 1, 2, 3});
    CHECK(d.labels == std::vector<int>{7, 3});
    CHECK(d.images.data[0] == 0.0f);
    CHECK(d.images.data[1] == doctest::Approx(20.0f / 255.0f));
    for (auto f : d.poison_flags) CHECK(f == 0);
}

TEST_CASE("corrupt IDX magic is rejected") {
    const std::string dir = tmp_dir();
    std::vector<unsigned char> imgs;
    push_be32(imgs, 0x00000804);  // wrong
    push_be32(imgs, 1);
    push_be32(imgs, 1);
    push_be32(imgs, 1);
    imgs.push_back(0);
    write_bytes(dir + "/bad", imgs);
    write_bytes(dir + "/bad_labels", imgs);
    CHECK_THROWS_WITH_AS(load_mnist_idx(dir + "/bad", dir + "/bad_labels"),
                         doctest::Contains("magic"), std::runtime_error);
}

TEST_CASE("truncated IDX image payload is rejected") {
    const std::string dir = tmp_dir();
    std::vector<unsigned char> imgs;
    push_be32(imgs, 0x00000803);
    push_be32(imgs, 4);
    push_be32(imgs, 2);
    push_be32(imgs, 2);
    imgs.push_back(0);  // far too short
    std::vector<unsigned char> labs;
    push_be32(labs, 0x00000801);
    push_be32(labs, 4);
    for (int i = 0; i < 4; ++i) labs.push_back(0);
    write_bytes(dir + "/trunc", imgs);
    write_bytes(dir + "/trunc_labels", labs);
    CHECK_THROWS_WITH_AS(load_mnist_idx(dir + "/trunc", dir + "/trunc_labels"),
                         doctest::Contains("truncated"), std::runtime_error);
}

TEST_CASE("CIFAR-10 batch loads RGB planes and labels") {
    const std::string dir = tmp_dir();
    std::vector<unsigned char> rec;
    // 2 records: label + 3072 bytes
    for (int r = 0; r < 2; ++r) {
        rec.push_back(static_cast<unsigned char>(r + 1));
        for (int i = 0; i < 3072; ++i) {
            rec.push_back(static_cast<unsigned char>((i + r) % 251));
        }
    }
    const std::string p = dir + "/batch.bin";
    write_bytes(p, rec);

    const LabeledDataset d = load_cifar10_batch(p);
    d.check_consistent();
    CHECK(d.size() == 2);
    CHECK(d.images.shape == std::vector<std::size_t>{2, 3, 32, 32});
    CHECK(d.labels == std::vector<int>{1, 2});
    CHECK(d.images.data[0] == 0.0f);
    CHECK(d.images.data[1] == doctest::Approx(1.0f / 255.0f));
}

TEST_CASE("CIFAR-10 truncated record is rejected") {
    const std::string dir = tmp_dir();
    std::vector<unsigned char> rec(3073 + 100, 0);  // one full record + partial second
    write_bytes(dir + "/short.bin", rec);
    CHECK_THROWS(load_cifar10_batch(dir + "/short.bin"));
}

TEST_CASE("synthetic corpus round-trips through IDX exactly") {
    const std::string dir = tmp_dir() + "/synth";
    const LabeledDataset gen = make_synth_digits(50, 5);
    fs::create_directories(dir);
    write_mnist_idx(gen, dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
    const LabeledDataset back =
        load_mnist_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
    CHECK(back.images.data == gen.images.data);
    CHECK(back.labels == gen.labels);
}

TEST_CASE("synthetic digits are label-balanced, bounded and seed-stable") {
    const LabeledDataset a = make_synth_digits(100, 9);
    const LabeledDataset b = make_synth_digits(100, 9);
    const LabeledDataset c = make_synth_digits(100, 10);
    CHECK(a.images.data == b.images.data);
    CHECK(a.images.data != c.images.data);
    a.check_consistent();
    std::vector<int> per_class(10, 0);
    for (int l : a.labels) ++per_class[static_cast<std::size_t>(l)];
    for (int n : per_class) CHECK(n == 10);
}

TEST_CASE("subset and truncated copy the right samples") {
    const LabeledDataset d = make_synth_digits(20, 2);
    const LabeledDataset s = d.subset({3, 7});
    CHECK(s.size() == 2);
    CHECK(s.labels[0] == d.labels[3]);
    CHECK(s.images.data[0] == d.images.data[3 * 28 * 28]);
    CHECK(d.truncated(5).size() == 5);
    CHECK(d.truncated(0).size() == 20);
    CHECK(d.truncated(100).size() == 20);
}
