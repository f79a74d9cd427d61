fn main() {
    let args: Vec<String> = std::env::args().collect();
    let env_seed = std::env::var("LGFLAB_SEED").ok();
    std::process::exit(lgf_lab::cli::main_with(&args, env_seed.as_deref()));
}
