namespace raci {}
