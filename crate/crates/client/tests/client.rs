use sentinel_client::{Client, ClientError};
use sentinel_core::api::ErrorKind;

#[tokio::test]
async fn unreachable_service_is_internal() {
    // bind then drop to get a port nobody listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let e = Client::new(format!("http://127.0.0.1:{port}")).health().await.unwrap_err();
    assert!(matches!(e, ClientError::Transport(_)));
    assert_eq!(e.kind(), ErrorKind::Internal);
}

#[tokio::test]
async fn non_json_errors_keep_status() {
    let (addr, _) = sentinel_server::spawn(([127, 0, 0, 1], 0).into()).await.unwrap();
    let c = Client::new(format!("http://{addr}/"));
    assert_eq!(c.base(), format!("http://{addr}"));
    c.health().await.unwrap();
    let e = Client::new(format!("http://{addr}/nope")).health().await.unwrap_err();
    match e {
        ClientError::Api { status, ref body } => {
            assert_eq!(status, 404);
            assert_eq!(body.kind, ErrorKind::Usage);
        }
        other => panic!("{other:?}"),
    }
}
