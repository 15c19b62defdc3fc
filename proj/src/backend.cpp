#include "mad/backend.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace mad {

PriceTable PriceTable::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw std::runtime_error("cannot open price file: " + file.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw std::runtime_error("malformed price file " + file.string() + ": " + ex.what());
    }
    PriceTable prices;
    try {
        prices.input_price_per_million = j.at("input_price_per_million").get<double>();
        prices.output_price_per_million = j.at("output_price_per_million").get<double>();
        prices.currency_rate = j.value("currency_rate", 1.0);
        prices.currency = j.value("currency", std::string("EUR"));
    } catch (const nlohmann::json::exception& ex) {
        throw std::runtime_error("malformed price file " + file.string() + ": " + ex.what());
    }
    if (prices.input_price_per_million <= 0 || prices.output_price_per_million <= 0 ||
        prices.currency_rate <= 0) {
        throw std::runtime_error("price file " + file.string() +
                                 ": prices and currency_rate must be strictly positive");
    }
    return prices;
}

double estimate_cost(const Usage& usage, const PriceTable& prices) {
    double amount = static_cast<double>(usage.input_tokens) * prices.input_price_per_million +
                    static_cast<double>(usage.output_tokens) * prices.output_price_per_million;
    return amount / 1'000'000.0 * prices.currency_rate;
}

std::string format_cost(double amount) {
    double cents = std::floor(amount * 100.0 + 0.5);  // half-up
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", cents / 100.0);
    return buf;
}

}  // namespace mad
