#include "rtsync/server/seed.hpp"

#include "rtsync/datatree/snapshot.hpp"

#include <stdexcept>

namespace rtsync::server {

std::string_view example_document_json() {
    return R"({"leds":{"led1":false,"led2":false},)"
           R"("metadata":{"device_id":"ESP32_001","last_update":"2024-01-15T10:30:00Z"},)"
           R"("sensors":{"distance":17.68,"humidity":72.2,"temperature":23.2}})";
}

datatree::Tree example_document() {
    auto tree = datatree::restore_snapshot(example_document_json());
    if (!tree) {
        throw std::logic_error("built-in example document does not parse: " + tree.error().detail);
    }
    return std::move(tree).value();
}

} // namespace rtsync::server
