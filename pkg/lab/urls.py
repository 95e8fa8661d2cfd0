from django.urls import path

from rest_framework import routers

from lab import views

app_name = 'lab'

urlpatterns = [
    path('runs/', views.RunListAPIView.as_view(), name='run_list'),
    path('runs/completed/', views.CompletedRunListAPIView.as_view(), name='completed_runs'),
    path('experiments/<uuid:pk>/summary/', views.ExperimentSummaryAPIView.as_view(),
         name='experiment_summary'),
]

router = routers.DefaultRouter()
router.register(r'experiments', views.ExperimentViewSet)

urlpatterns += router.urls
