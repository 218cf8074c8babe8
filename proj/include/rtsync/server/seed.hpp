#pragma once

#include "rtsync/datatree/tree.hpp"

#include <string_view>

namespace rtsync::server {

// The reference deployment's initial document: sensor readings, both LEDs
// off, and device metadata.
std::string_view example_document_json();
datatree::Tree example_document();

} // namespace rtsync::server
