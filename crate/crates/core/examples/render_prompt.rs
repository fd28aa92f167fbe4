//! Loads a registry manifest and prints the prompt block that teaches a
//! model the function-token syntax for it.

use fnstream::registry::RegistryManifest;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/robot/registry.json");
    let registry = RegistryManifest::load(path)
        .and_then(RegistryManifest::into_registry)
        .expect("valid manifest");
    print!("{}", registry.render_prompt());
}
