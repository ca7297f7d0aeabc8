pub use ioredux_core;
