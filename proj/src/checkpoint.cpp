#include "newsim/checkpoint.hpp"

#include "newsim/error.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace newsim {

namespace {

constexpr std::array<char, 4> magic{'N', 'S', 'I', 'M'};

template <typename U>
void write_le(std::ostream &out, U value)
{
    std::array<unsigned char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i)
        bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char *>(bytes.data()), bytes.size());
}

template <typename U>
U read_le(std::istream &in)
{
    std::array<unsigned char, sizeof(U)> bytes{};
    if (!in.read(reinterpret_cast<char *>(bytes.data()), bytes.size()))
        throw DataError{"checkpoint is truncated"};
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        value |= static_cast<U>(bytes[i]) << (8 * i);
    return value;
}

} // namespace

void save_checkpoint(std::ostream &out, const ModelParameters &params)
{
    const std::string config = to_json(params.config).dump();
    out.write(magic.data(), magic.size());
    write_le<std::uint32_t>(out, checkpoint_version);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
    out.write(config.data(), static_cast<std::streamsize>(config.size()));

    const auto ts = tensors(params);
    std::uint64_t count = 0;
    for (const auto *t : ts)
        count += t->size();
    write_le<std::uint64_t>(out, count);
    for (const auto *t : ts)
        for (float v : t->data)
            write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    if (!out)
        throw DataError{"failed to write checkpoint"};
}

void save_checkpoint(const std::filesystem::path &path, const ModelParameters &params)
{
    std::ofstream out{path, std::ios::binary};
    if (!out)
        throw DataError{"cannot write checkpoint " + path.string()};
    save_checkpoint(out, params);
}

ModelParameters load_checkpoint(std::istream &in)
{
    std::array<char, 4> head{};
    if (!in.read(head.data(), head.size()) || head != magic)
        throw DataError{"not a checkpoint (bad magic)"};
    const auto version = read_le<std::uint32_t>(in);
    if (version != checkpoint_version)
        throw DataError{"unsupported checkpoint version " + std::to_string(version)};
    const auto config_len = read_le<std::uint32_t>(in);
    std::string config_text(config_len, '\0');
    if (!in.read(config_text.data(), config_len))
        throw DataError{"checkpoint is truncated"};
    const auto config_json = nlohmann::json::parse(config_text, nullptr, false);
    if (config_json.is_discarded())
        throw DataError{"checkpoint config is not valid JSON"};

    ModelConfig config;
    try {
        config = model_config_from_json(config_json);
    } catch (const ConfigError &e) {
        throw DataError{std::string{"checkpoint config: "} + e.what()};
    }
    auto params = zero_parameters<float>(config);
    const auto ts = tensors(params);
    std::uint64_t expected = 0;
    for (const auto *t : ts)
        expected += t->size();
    const auto count = read_le<std::uint64_t>(in);
    if (count != expected)
        throw DataError{"checkpoint holds " + std::to_string(count) + " values, config implies " +
                        std::to_string(expected)};
    for (auto *t : ts)
        for (float &v : t->data)
            v = std::bit_cast<float>(read_le<std::uint32_t>(in));
    return params;
}

ModelParameters load_checkpoint(const std::filesystem::path &path)
{
    std::ifstream in{path, std::ios::binary};
    if (!in)
        throw DataError{"cannot open checkpoint " + path.string()};
    return load_checkpoint(in);
}

} // namespace newsim
