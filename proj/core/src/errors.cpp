#include "keynet/errors.hpp"

namespace keynet {

UnsupportedLayer::UnsupportedLayer(const std::string& kind)
    : Error("unsupported layer kind '" + kind +
            "': only conv2d, avgpool, dense and relu can be keyed"),
      kind_(kind) {}

WrongSensor::WrongSensor(const std::string& expected,
                         const std::string& actual)
    : Error("wrong-sensor: image key fingerprint " + actual +
            " does not match keyed network fingerprint " + expected) {}

}  // namespace keynet
