fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(threads) = std::env::var("CMVLAB_THREADS")
        .ok()
        .and_then(|t| t.parse().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot size the thread pool: {e}");
            std::process::exit(2);
        }
    }
    std::process::exit(cmvlab::app::run_cli(std::env::args_os()));
}
